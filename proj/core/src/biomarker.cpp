#include "tmm/biomarker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "tmm/errors.hpp"
#include "tmm/rri.hpp"
#include "tmm/trainer.hpp"

namespace tmm::biomarker {
namespace {

double mean_true_prob(const Array& probs, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += probs.at(i, static_cast<std::size_t>(labels[i]));
  return total / static_cast<double>(labels.size());
}

}  // namespace

BiomarkerRanking feature_ablation_rank(const model::TmmModel& model, const data::Dataset& dataset,
                                       std::span<const std::size_t> eval_rows) {
  if (eval_rows.empty()) throw DataError("feature_ablation_rank: empty evaluation split");
  std::vector<int> labels;
  for (std::size_t r : eval_rows) labels.push_back(dataset.labels.at(r));
  const std::vector<Array> base = model::prepare_features(model, dataset, eval_rows);
  const Array base_probs = model::predict_proba(model, base);
  const double base_acc = train::accuracy(labels, train::argmax_rows(base_probs));
  const double base_prob = mean_true_prob(base_probs, labels);

  BiomarkerRanking ranking;
  for (std::size_t m = 0; m < model.modalities.size(); ++m) {
    for (std::size_t r = 0; r < model.roi_ids.size(); ++r) {
      // The training mean maps to 0 after scaling.
      std::vector<Array> ablated = base;
      for (std::size_t i = 0; i < eval_rows.size(); ++i) ablated[m].at(i, r) = 0.0;
      const Array probs = model::predict_proba(model, ablated);
      RankEntry e;
      e.roi_id = model.roi_ids[r];
      e.modality = model.modalities[m];
      e.roi_index = r;
      e.modality_index = m;
      e.score = base_acc - train::accuracy(labels, train::argmax_rows(probs));
      e.prob_drop = base_prob - mean_true_prob(probs, labels);
      ranking.push_back(std::move(e));
    }
  }
  std::stable_sort(ranking.begin(), ranking.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.prob_drop > b.prob_drop;
  });
  return ranking;
}

BiomarkerRanking for_modality(const BiomarkerRanking& ranking, const std::string& modality) {
  BiomarkerRanking out;
  for (const RankEntry& e : ranking) {
    if (e.modality == modality) out.push_back(e);
  }
  return out;
}

void write_ranking_csv(const BiomarkerRanking& ranking, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "rank,roi,modality,score,prob_drop\n";
  char buf[96];
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.9f", ranking[i].score, ranking[i].prob_drop);
    out << i + 1 << ',' << ranking[i].roi_id << ',' << ranking[i].modality << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

BiomarkerRanking read_ranking_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line) || line.rfind("rank,roi,modality,score", 0) != 0) {
    throw ParseError(path.string() + ":1: unexpected header");
  }
  BiomarkerRanking out;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ParseError(path.string() + ":" + std::to_string(number) + ": expected 5 cells");
    RankEntry e;
    e.roi_id = cells[1];
    e.modality = cells[2];
    try {
      e.score = std::stod(cells[3]);
      e.prob_drop = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": non-numeric score");
    }
    out.push_back(std::move(e));
  }
  return out;
}

ConnectivityExport build_connectivity(const Array& columns, const std::vector<std::string>& roi_ids,
                                      const BiomarkerRanking& ranking, std::size_t top_k) {
  if (columns.rank() != 2 || columns.extent(1) != roi_ids.size()) {
    throw DimensionError("build_connectivity: matrix " + shape_string(columns.shape()) + " for " +
                         std::to_string(roi_ids.size()) + " ROI ids");
  }
  std::vector<const RankEntry*> top;
  std::set<std::string> seen;
  for (const RankEntry& e : ranking) {
    if (top.size() == top_k) break;
    if (seen.insert(e.roi_id).second) top.push_back(&e);
  }
  if (top_k == 0 || top.size() < top_k) {
    throw ConfigError("top_k = " + std::to_string(top_k) + " but the ranking holds " + std::to_string(seen.size()) +
                      " distinct ROIs");
  }
  std::vector<std::size_t> index;
  for (const RankEntry* e : top) {
    auto it = std::find(roi_ids.begin(), roi_ids.end(), e->roi_id);
    if (it == roi_ids.end()) throw DataError("ROI '" + e->roi_id + "' not present in the matrix");
    index.push_back(static_cast<std::size_t>(it - roi_ids.begin()));
  }
  ConnectivityExport out;
  const double radius = 50.0;
  for (std::size_t i = 0; i < top_k; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(top_k);
    NodeRecord n;
    n.x = radius * std::cos(angle);
    n.y = radius * std::sin(angle);
    n.z = 0.0;
    n.color = static_cast<int>(top[i]->modality_index) + 1;
    n.size = top[i]->score;
    n.label = top[i]->roi_id;
    out.nodes.push_back(std::move(n));
  }
  out.weights = Array(Shape{top_k, top_k});
  std::vector<std::vector<double>> cols(top_k);
  for (std::size_t i = 0; i < top_k; ++i) {
    for (std::size_t row = 0; row < columns.extent(0); ++row) cols[i].push_back(columns.at(row, index[i]));
  }
  for (std::size_t i = 0; i < top_k; ++i) {
    out.weights.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < top_k; ++j) {
      const double r = rri::pearson(cols[i], cols[j]);
      out.weights.at(i, j) = r;
      out.weights.at(j, i) = r;
    }
  }
  return out;
}

void write_connectivity(const ConnectivityExport& conn, const std::filesystem::path& node_path,
                        const std::filesystem::path& edge_path) {
  if (conn.weights.rank() != 2 || conn.weights.extent(0) != conn.nodes.size() ||
      conn.weights.extent(1) != conn.nodes.size()) {
    throw DimensionError("write_connectivity: node count does not match the weight matrix");
  }
  std::ofstream nodes(node_path);
  if (!nodes) throw IoError("cannot open " + node_path.string() + " for writing");
  nodes << "# x y z color size label; coordinates are a synthetic ring layout, not atlas positions\n";
  char buf[128];
  for (const NodeRecord& n : conn.nodes) {
    std::snprintf(buf, sizeof buf, "%.3f %.3f %.3f %d %.6f ", n.x, n.y, n.z, n.color, n.size);
    nodes << buf << n.label << '\n';
  }
  if (!nodes) throw IoError("write failed for " + node_path.string());

  std::ofstream edges(edge_path);
  if (!edges) throw IoError("cannot open " + edge_path.string() + " for writing");
  for (std::size_t i = 0; i < conn.nodes.size(); ++i) {
    for (std::size_t j = 0; j < conn.nodes.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", conn.weights.at(i, j));
      edges << (j > 0 ? " " : "") << buf;
    }
    edges << '\n';
  }
  if (!edges) throw IoError("write failed for " + edge_path.string());
}

}  // namespace tmm::biomarker
