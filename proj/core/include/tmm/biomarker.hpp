#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/data.hpp"
#include "tmm/model.hpp"

// Feature-ablation ROI importance and connectivity export for top ROIs.
namespace tmm::biomarker {

struct RankEntry {
  std::string roi_id;
  std::string modality;
  std::size_t roi_index = 0;
  std::size_t modality_index = 0;
  double score = 0.0;      // accuracy drop when the ROI is replaced by its training mean
  double prob_drop = 0.0;  // drop of the mean true-class probability (tie-break)
};

using BiomarkerRanking = std::vector<RankEntry>;

// One entry per (ROI, modality), sorted by score, then prob_drop, both
// non-increasing; remaining ties keep modality-major, ROI order.
BiomarkerRanking feature_ablation_rank(const model::TmmModel& model, const data::Dataset& dataset,
                                       std::span<const std::size_t> eval_rows);

// Entries of `modality` only, in ranking order.
BiomarkerRanking for_modality(const BiomarkerRanking& ranking, const std::string& modality);

// CSV with columns rank,roi,modality,score,prob_drop.
void write_ranking_csv(const BiomarkerRanking& ranking, const std::filesystem::path& path);
BiomarkerRanking read_ranking_csv(const std::filesystem::path& path);

struct NodeRecord {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  int color = 1;
  double size = 0.0;
  std::string label;
};

struct ConnectivityExport {
  std::vector<NodeRecord> nodes;
  Array weights;  // top_k x top_k Pearson correlations, unit diagonal
};

// The first `top_k` distinct ROIs of `ranking` (size = best score, color =
// 1 + modality index of that entry) placed on a ring; weights are Pearson
// correlations between their columns in `columns` (rows x d, ordered as
// `roi_ids`). Throws ConfigError if top_k exceeds the distinct ROI count.
ConnectivityExport build_connectivity(const Array& columns, const std::vector<std::string>& roi_ids,
                                      const BiomarkerRanking& ranking, std::size_t top_k);

// Node file: '#' header then "x y z color size label" per ROI. Edge file:
// whitespace-separated weight matrix.
void write_connectivity(const ConnectivityExport& conn, const std::filesystem::path& node_path,
                        const std::filesystem::path& edge_path);

}  // namespace tmm::biomarker
