#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/matrices.hpp"

// Dataset containers, the CSV contract, the synthetic generator with planted
// ground truth, and stratified fold construction.
namespace tmm::data {

// A header row of ids followed by numeric rows.
struct CsvMatrix {
  std::vector<std::string> header;
  Array values;  // rows x header.size()
};

// Parses a comma-separated numeric matrix with a header row. Ragged rows,
// non-numeric or empty cells, duplicate header ids and empty files raise
// ParseError citing path and line.
CsvMatrix load_matrix_csv(const std::filesystem::path& path);
// Values are written in shortest round-trip form.
void write_matrix_csv(const std::vector<std::string>& header, const Array& values,
                      const std::filesystem::path& path);

ExpressionMatrix load_expression_csv(const std::filesystem::path& path);
FeatureMatrix load_feature_csv(const std::filesystem::path& path, std::string modality);

struct Labels {
  std::vector<std::string> sample_ids;
  std::vector<int> labels;
};

// Two columns with header "sample_id,label"; labels are non-negative integers.
Labels load_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const Labels& labels, const std::filesystem::path& path);

struct Dataset {
  ExpressionMatrix expression;
  std::vector<FeatureMatrix> modalities;
  std::vector<std::string> sample_ids;
  std::vector<int> labels;
  std::string provenance;

  std::size_t samples() const { return labels.size(); }
  std::size_t rois() const { return expression.roi_ids.size(); }
  std::size_t modality_count() const { return modalities.size(); }
  std::size_t classes() const;  // max label + 1
  const std::vector<std::string>& roi_ids() const { return expression.roi_ids; }

  // Throws DataError unless all matrices agree on ROI ids and sample counts.
  void validate() const;
};

// Keeps only the listed modalities, in the given order.
Dataset select_modalities(const Dataset& dataset, const std::vector<std::size_t>& keep);

// Directory layout: expression.csv, labels.csv, features_<modality>.csv
// (modalities loaded in lexicographic order).
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

struct SyntheticSpec {
  std::size_t n = 400;
  std::size_t d = 32;
  std::size_t n_g = 200;
  std::size_t modalities = 3;
  std::size_t classes = 2;
  std::size_t n_blocks = 4;
  std::size_t informative = 8;  // informative ROIs per modality
  double class_effect = 1.5;
  double sigma_lo = 0.5;
  double sigma_hi = 2.0;
  // Per-modality multiplier on class_effect; empty means all 1. Shorter
  // lists repeat their last entry.
  std::vector<double> modality_scale;
  std::vector<std::size_t> class_sizes;  // empty means balanced

  // Throws ConfigError for infeasible combinations.
  void validate() const;
  double scale_of(std::size_t m) const;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::vector<std::string> modalities;
  std::vector<std::vector<std::string>> informative_rois;  // per modality
  std::vector<std::size_t> block_of_roi;                   // per ROI
  std::vector<std::vector<double>> sigma;                  // [modality][sample]
  std::size_t strongest_modality = 0;                      // largest effect scale
};

struct Synthetic {
  Dataset dataset;
  GroundTruth truth;
};

// Block-structured expression (ROIs of one block share a latent factor per
// gene); imaging features = ROI baseline + class effect on the modality's
// informative ROIs + per-sample noise with sigma ~ U[sigma_lo, sigma_hi].
// Informative subsets follow the block partition and are disjoint across
// modalities while s * M <= d.
Synthetic generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// key = value lines; lists are comma-separated.
void write_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

struct FoldSplit {
  std::vector<std::vector<std::size_t>> folds;  // sorted sample indices

  std::size_t k() const { return folds.size(); }
  std::vector<std::size_t> test(std::size_t fold) const;
  std::vector<std::size_t> train(std::size_t fold) const;
};

// Shuffles each class with `seed` and deals members round-robin across
// folds. Throws SplitError if a class has fewer than k members or k < 2.
FoldSplit stratified_split(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

}  // namespace tmm::data
