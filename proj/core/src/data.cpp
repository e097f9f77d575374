#include "tmm/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "tmm/errors.hpp"

namespace fs = std::filesystem;

namespace tmm::data {
namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line) {
  const std::string t = trim(cell);
  double v = 0.0;
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(where(path, line) + ": non-numeric cell '" + t + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

// Reads non-empty lines, stripping a trailing '\r'. Pairs of (line number, text).
std::vector<std::pair<std::size_t, std::string>> read_lines(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    lines.emplace_back(number, line);
  }
  return lines;
}

std::string join(const std::vector<std::string>& parts, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

CsvMatrix load_matrix_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty file");
  CsvMatrix out;
  std::set<std::string> seen;
  for (std::string id : split_commas(lines[0].second)) {
    id = trim(id);
    if (id.empty()) throw ParseError(where(path, lines[0].first) + ": empty column id");
    if (!seen.insert(id).second) throw ParseError(where(path, lines[0].first) + ": duplicate column id '" + id + "'");
    out.header.push_back(id);
  }
  if (lines.size() < 2) throw ParseError(path.string() + ": no data rows");
  const std::size_t cols = out.header.size();
  std::vector<double> values;
  values.reserve((lines.size() - 1) * cols);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto& [number, text] = lines[r];
    const std::vector<std::string> cells = split_commas(text);
    if (cells.size() != cols) {
      throw ParseError(where(path, number) + ": expected " + std::to_string(cols) + " cells, found " +
                       std::to_string(cells.size()));
    }
    for (const std::string& cell : cells) values.push_back(parse_cell(cell, path, number));
  }
  out.values = Array(Shape{lines.size() - 1, cols}, std::move(values));
  return out;
}

void write_matrix_csv(const std::vector<std::string>& header, const Array& values, const fs::path& path) {
  if (values.rank() != 2 || values.extent(1) != header.size()) {
    throw DimensionError("write_matrix_csv: " + std::to_string(header.size()) + " ids for values " +
                         shape_string(values.shape()));
  }
  std::ofstream out = open_out(path);
  out << join(header) << '\n';
  for (std::size_t i = 0; i < values.extent(0); ++i) {
    for (std::size_t j = 0; j < values.extent(1); ++j) {
      if (j > 0) out << ',';
      out << format_double(values.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ExpressionMatrix load_expression_csv(const fs::path& path) {
  CsvMatrix m = load_matrix_csv(path);
  ExpressionMatrix out;
  for (std::size_t g = 0; g < m.values.extent(0); ++g) out.gene_ids.push_back("gene_" + std::to_string(g));
  out.roi_ids = std::move(m.header);
  out.values = std::move(m.values);
  return out;
}

FeatureMatrix load_feature_csv(const fs::path& path, std::string modality) {
  CsvMatrix m = load_matrix_csv(path);
  return FeatureMatrix{std::move(m.values), std::move(m.header), std::move(modality)};
}

Labels load_labels_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty file");
  const std::vector<std::string> head = split_commas(lines[0].second);
  if (head.size() != 2 || trim(head[0]) != "sample_id" || trim(head[1]) != "label") {
    throw ParseError(where(path, lines[0].first) + ": header must be 'sample_id,label'");
  }
  Labels out;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto& [number, text] = lines[r];
    const std::vector<std::string> cells = split_commas(text);
    if (cells.size() != 2) throw ParseError(where(path, number) + ": expected 2 cells");
    const std::string id = trim(cells[0]);
    const std::string value = trim(cells[1]);
    if (id.empty()) throw ParseError(where(path, number) + ": empty sample id");
    if (!seen.insert(id).second) throw ParseError(where(path, number) + ": duplicate sample id '" + id + "'");
    int label = -1;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), label);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size() || label < 0) {
      throw ParseError(where(path, number) + ": label '" + value + "' is not a non-negative integer");
    }
    out.sample_ids.push_back(id);
    out.labels.push_back(label);
  }
  if (out.labels.empty()) throw ParseError(path.string() + ": no data rows");
  return out;
}

void write_labels_csv(const Labels& labels, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "sample_id,label\n";
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    out << labels.sample_ids[i] << ',' << labels.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::size_t Dataset::classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

void Dataset::validate() const {
  if (labels.size() != sample_ids.size()) {
    throw DataError(std::to_string(labels.size()) + " labels for " + std::to_string(sample_ids.size()) + " sample ids");
  }
  if (modalities.empty()) throw DataError("dataset has no imaging modality");
  const std::size_t d = expression.roi_ids.size();
  if (expression.values.rank() != 2 || expression.values.extent(1) != d) {
    throw DataError("expression matrix does not match its " + std::to_string(d) + " ROI ids");
  }
  const std::set<std::string> reference(expression.roi_ids.begin(), expression.roi_ids.end());
  for (const FeatureMatrix& f : modalities) {
    if (std::set<std::string>(f.roi_ids.begin(), f.roi_ids.end()) != reference) {
      throw DataError("modality '" + f.modality + "' has a different ROI id set than the expression matrix");
    }
    if (f.roi_ids != expression.roi_ids) {
      throw DataError("modality '" + f.modality + "' lists ROI ids in a different order");
    }
    if (f.values.extent(0) != labels.size()) {
      throw DataError("modality '" + f.modality + "' has " + std::to_string(f.values.extent(0)) + " rows for " +
                      std::to_string(labels.size()) + " labels");
    }
  }
  for (int y : labels) {
    if (y < 0) throw DataError("negative label");
  }
}

Dataset select_modalities(const Dataset& dataset, const std::vector<std::size_t>& keep) {
  Dataset out = dataset;
  out.modalities.clear();
  for (std::size_t m : keep) {
    if (m >= dataset.modalities.size()) {
      throw ConfigError("modality index " + std::to_string(m) + " out of range");
    }
    out.modalities.push_back(dataset.modalities[m]);
  }
  return out;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_matrix_csv(dataset.expression.roi_ids, dataset.expression.values, dir / "expression.csv");
  write_labels_csv(Labels{dataset.sample_ids, dataset.labels}, dir / "labels.csv");
  for (const FeatureMatrix& f : dataset.modalities) {
    write_matrix_csv(f.roi_ids, f.values, dir / ("features_" + f.modality + ".csv"));
  }
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  Dataset out;
  out.expression = load_expression_csv(dir / "expression.csv");
  Labels labels = load_labels_csv(dir / "labels.csv");
  out.sample_ids = std::move(labels.sample_ids);
  out.labels = std::move(labels.labels);
  std::vector<std::pair<std::string, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("features_") && name.ends_with(".csv")) {
      found.emplace_back(name.substr(9, name.size() - 13), entry.path());
    }
  }
  std::sort(found.begin(), found.end());
  for (const auto& [modality, path] : found) out.modalities.push_back(load_feature_csv(path, modality));
  out.provenance = "loaded:" + dir.string();
  out.validate();
  return out;
}

void SyntheticSpec::validate() const {
  if (n == 0 || d < 2 || n_g < 3 || modalities == 0 || classes < 2) {
    throw ConfigError("synthetic spec needs n >= 1, d >= 2, n_g >= 3, M >= 1, C >= 2");
  }
  if (n_blocks == 0 || d % n_blocks != 0) {
    throw ConfigError("n_blocks = " + std::to_string(n_blocks) + " does not divide d = " + std::to_string(d));
  }
  if (informative == 0 || informative > d) {
    throw ConfigError("informative = " + std::to_string(informative) + " must lie in [1, d = " + std::to_string(d) + "]");
  }
  if (!(sigma_lo >= 0.0) || !(sigma_hi >= sigma_lo)) {
    throw ConfigError("noise range requires 0 <= sigma_lo <= sigma_hi");
  }
  if (!std::isfinite(class_effect)) throw ConfigError("class_effect must be finite");
  for (double s : modality_scale) {
    if (!std::isfinite(s)) throw ConfigError("modality_scale entries must be finite");
  }
  if (!class_sizes.empty()) {
    if (class_sizes.size() != classes) {
      throw ConfigError(std::to_string(class_sizes.size()) + " class sizes for " + std::to_string(classes) + " classes");
    }
    if (std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0}) != n) {
      throw ConfigError("class sizes do not sum to n = " + std::to_string(n));
    }
  }
}

double SyntheticSpec::scale_of(std::size_t m) const {
  if (modality_scale.empty()) return 1.0;
  return modality_scale[std::min(m, modality_scale.size() - 1)];
}

Synthetic generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> noise_range(spec.sigma_lo, spec.sigma_hi);

  const std::size_t d = spec.d;
  const std::size_t block_size = d / spec.n_blocks;

  Synthetic out;
  Dataset& ds = out.dataset;
  GroundTruth& truth = out.truth;
  truth.seed = seed;

  std::vector<std::string> rois;
  for (std::size_t r = 0; r < d; ++r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "roi_%02zu", r);
    rois.emplace_back(buf);
  }

  // Random block partition: shuffled ROIs dealt into consecutive blocks.
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  truth.block_of_roi.assign(d, 0);
  for (std::size_t i = 0; i < d; ++i) truth.block_of_roi[order[i]] = i / block_size;

  // Expression: gene-by-ROI latent per block plus independent noise.
  ds.expression.roi_ids = rois;
  ds.expression.values = Array(Shape{spec.n_g, d});
  for (std::size_t g = 0; g < spec.n_g; ++g) {
    ds.expression.gene_ids.push_back("gene_" + std::to_string(g));
    std::vector<double> latent(spec.n_blocks);
    for (double& v : latent) v = normal(rng);
    for (std::size_t r = 0; r < d; ++r) {
      ds.expression.values.at(g, r) = 5.0 + latent[truth.block_of_roi[r]] + normal(rng);
    }
  }

  // Labels: explicit or balanced class sizes, shuffled.
  std::vector<std::size_t> sizes = spec.class_sizes;
  if (sizes.empty()) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      sizes.push_back(spec.n / spec.classes + (c < spec.n % spec.classes ? 1 : 0));
    }
  }
  for (std::size_t c = 0; c < sizes.size(); ++c) ds.labels.insert(ds.labels.end(), sizes[c], static_cast<int>(c));
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  for (std::size_t i = 0; i < spec.n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", i);
    ds.sample_ids.emplace_back(buf);
  }

  // Informative subsets: consecutive chunks of the block-ordered ROI list.
  std::vector<std::size_t> by_block(order);
  std::stable_sort(by_block.begin(), by_block.end(), [&](std::size_t a, std::size_t b) {
    return truth.block_of_roi[a] < truth.block_of_roi[b];
  });

  double best_scale = -1.0;
  for (std::size_t m = 0; m < spec.modalities; ++m) {
    const std::string name = "mod" + std::to_string(m);
    truth.modalities.push_back(name);
    std::vector<bool> informative(d, false);
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < spec.informative; ++i) chosen.push_back(by_block[(m * spec.informative + i) % d]);
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::string> ids;
    for (std::size_t r : chosen) {
      informative[r] = true;
      ids.push_back(rois[r]);
    }
    truth.informative_rois.push_back(ids);
    const double scale = spec.scale_of(m);
    if (scale > best_scale) {
      best_scale = scale;
      truth.strongest_modality = m;
    }

    std::vector<double> baseline(d);
    for (double& b : baseline) b = 2.0 * normal(rng);
    std::vector<double> sigma(spec.n);
    for (double& s : sigma) s = noise_range(rng);
    Array x(Shape{spec.n, d});
    for (std::size_t i = 0; i < spec.n; ++i) {
      const double effect = spec.class_effect * scale * static_cast<double>(ds.labels[i]);
      for (std::size_t r = 0; r < d; ++r) {
        x.at(i, r) = baseline[r] + (informative[r] ? effect : 0.0) + sigma[i] * normal(rng);
      }
    }
    truth.sigma.push_back(std::move(sigma));
    ds.modalities.push_back(FeatureMatrix{std::move(x), rois, name});
  }
  ds.provenance = "synthetic:seed=" + std::to_string(seed);
  ds.validate();
  return out;
}

void write_ground_truth(const GroundTruth& truth, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "seed = " << truth.seed << '\n';
  out << "modalities = " << join(truth.modalities) << '\n';
  out << "strongest_modality = " << truth.modalities.at(truth.strongest_modality) << '\n';
  std::vector<std::string> blocks;
  for (std::size_t b : truth.block_of_roi) blocks.push_back(std::to_string(b));
  out << "block_of_roi = " << join(blocks) << '\n';
  for (std::size_t m = 0; m < truth.modalities.size(); ++m) {
    out << "informative." << truth.modalities[m] << " = " << join(truth.informative_rois[m]) << '\n';
  }
  for (std::size_t m = 0; m < truth.modalities.size(); ++m) {
    std::vector<std::string> values;
    for (double s : truth.sigma[m]) values.push_back(format_double(s));
    out << "sigma." << truth.modalities[m] << " = " << join(values) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

GroundTruth read_ground_truth(const fs::path& path) {
  std::map<std::string, std::pair<std::size_t, std::string>> kv;
  for (const auto& [number, text] : read_lines(path)) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(where(path, number) + ": expected 'key = value'");
    kv[trim(text.substr(0, eq))] = {number, trim(text.substr(eq + 1))};
  }
  const auto get = [&](const std::string& key) -> const std::pair<std::size_t, std::string>& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  const auto list = [](const std::string& v) {
    std::vector<std::string> out;
    for (std::string s : split_commas(v)) out.push_back(trim(s));
    return out;
  };
  GroundTruth truth;
  {
    const auto& [line, v] = get("seed");
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), truth.seed);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ParseError(where(path, line) + ": bad seed");
  }
  truth.modalities = list(get("modalities").second);
  const std::string strongest = get("strongest_modality").second;
  const auto it = std::find(truth.modalities.begin(), truth.modalities.end(), strongest);
  if (it == truth.modalities.end()) throw ParseError(path.string() + ": unknown strongest_modality");
  truth.strongest_modality = static_cast<std::size_t>(it - truth.modalities.begin());
  {
    const auto& [line, v] = get("block_of_roi");
    for (const std::string& cell : list(v)) {
      std::size_t b = 0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), b);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) throw ParseError(where(path, line) + ": bad block index");
      truth.block_of_roi.push_back(b);
    }
  }
  for (const std::string& m : truth.modalities) {
    truth.informative_rois.push_back(list(get("informative." + m).second));
    const auto& [line, v] = get("sigma." + m);
    std::vector<double> sigma;
    for (const std::string& cell : list(v)) sigma.push_back(parse_cell(cell, path, line));
    truth.sigma.push_back(std::move(sigma));
  }
  return truth;
}

std::vector<std::size_t> FoldSplit::test(std::size_t fold) const { return folds.at(fold); }

std::vector<std::size_t> FoldSplit::train(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldSplit stratified_split(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw SplitError("k must be at least 2, got " + std::to_string(k));
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < k) {
      throw SplitError("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                       " samples, fewer than k = " + std::to_string(k));
    }
  }
  std::mt19937_64 rng(seed);
  FoldSplit split;
  split.folds.resize(k);
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) {
      split.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
  return split;
}

}  // namespace tmm::data
