#include "tmm/rri.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tmm/errors.hpp"

namespace tmm::rri {
namespace {

std::string column_label(std::span<const std::string> names, std::size_t j) {
  if (j < names.size()) return "'" + names[j] + "' (column " + std::to_string(j) + ")";
  return "column " + std::to_string(j);
}

}  // namespace

const char* view_name(View view) {
  return view == View::kTranscriptomic ? "T-RRI" : "R-RRI";
}

std::size_t EdgeMatrix::edge_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < order(); ++i) {
    for (std::size_t j = i + 1; j < order(); ++j) count += has_edge(i, j) ? 1 : 0;
  }
  return count;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("pearson: lengths differ (" + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DimensionError("pearson: need at least 2 observations");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ZeroVarianceError("pearson: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Array correlation_matrix(const Array& columns, std::span<const std::string> names) {
  if (columns.rank() != 2) {
    throw DimensionError("correlation_matrix: expected a matrix, got " + shape_string(columns.shape()));
  }
  const std::size_t rows = columns.extent(0);
  const std::size_t d = columns.extent(1);
  std::vector<std::vector<double>> cols(d, std::vector<double>(rows));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < rows; ++i) cols[j][i] = columns.at(i, j);
    if (std::all_of(cols[j].begin(), cols[j].end(), [&](double v) { return v == cols[j][0]; })) {
      throw ZeroVarianceError("zero variance in " + column_label(names, j));
    }
  }
  Array r(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) {
    r.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double v = pearson(cols[i], cols[j]);
      r.at(i, j) = v;
      r.at(j, i) = v;
    }
  }
  return r;
}

EdgeMatrix build_edge_matrix(const Array& columns, double lambda, std::string source,
                             std::span<const std::string> names) {
  if (columns.rank() != 2 || columns.extent(1) < 2) {
    throw DimensionError("build_edge_matrix: need at least 2 columns, got " + shape_string(columns.shape()));
  }
  const Array r = correlation_matrix(columns, names);
  const std::size_t d = r.extent(0);
  EdgeMatrix out{Array(Shape{d, d}), lambda, std::move(source)};
  for (std::size_t i = 0; i < d; ++i) {
    out.adjacency.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double e = r.at(i, j) >= lambda ? 1.0 : 0.0;
      out.adjacency.at(i, j) = e;
      out.adjacency.at(j, i) = e;
    }
  }
  return out;
}

std::vector<std::pair<SampleGraph, SampleGraph>> assemble_sample_graphs(
    const FeatureMatrix& features, std::shared_ptr<const EdgeMatrix> transcriptomic,
    std::shared_ptr<const EdgeMatrix> radiomic, std::span<const std::string> sample_ids) {
  const std::size_t n = features.values.extent(0);
  const std::size_t d = features.values.extent(1);
  if (transcriptomic->order() != d || radiomic->order() != d) {
    throw DimensionError("assemble_sample_graphs: features have " + std::to_string(d) +
                         " ROIs but edge matrices have order " + std::to_string(transcriptomic->order()) +
                         " and " + std::to_string(radiomic->order()));
  }
  if (!sample_ids.empty() && sample_ids.size() != n) {
    throw DimensionError("assemble_sample_graphs: " + std::to_string(sample_ids.size()) +
                         " sample ids for " + std::to_string(n) + " samples");
  }
  std::vector<std::pair<SampleGraph, SampleGraph>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Array nodes(Shape{d, 1});
    for (std::size_t j = 0; j < d; ++j) nodes[j] = features.values.at(i, j);
    const std::string id = sample_ids.empty() ? "s" + std::to_string(i) : sample_ids[i];
    SampleGraph t{transcriptomic, nodes, id, View::kTranscriptomic, features.modality};
    SampleGraph r{radiomic, std::move(nodes), id, View::kRadiomic, features.modality};
    out.emplace_back(std::move(t), std::move(r));
  }
  return out;
}

void write_edge_matrix(const EdgeMatrix& edges, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t d = edges.order();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (j > 0) out << ' ';
      out << (edges.has_edge(i, j) ? 1 : 0);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

EdgeMatrix read_edge_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::size_t d = 0;
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::size_t count = 0;
    double v = 0.0;
    while (ss >> v) {
      if (v != 0.0 && v != 1.0) {
        throw ParseError(path.string() + ":" + std::to_string(rows + 1) + ": entries must be 0 or 1");
      }
      values.push_back(v);
      ++count;
    }
    if (rows == 0) d = count;
    if (count != d) throw ParseError(path.string() + ":" + std::to_string(rows + 1) + ": ragged row");
    ++rows;
  }
  if (rows != d || d == 0) throw ParseError(path.string() + ": edge matrix is not square");
  EdgeMatrix out{Array(Shape{d, d}, std::move(values)), 0.0, path.stem().string()};
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (out.adjacency.at(i, j) != out.adjacency.at(j, i)) {
        throw ParseError(path.string() + ": edge matrix is not symmetric");
      }
    }
  }
  return out;
}

}  // namespace tmm::rri
