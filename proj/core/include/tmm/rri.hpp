#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/matrices.hpp"

// Region-region interaction (RRI) graphs: thresholded Pearson co-function
// networks over ROIs, plus the per-sample graphs built on top of them.
namespace tmm::rri {

enum class View { kTranscriptomic, kRadiomic };

const char* view_name(View view);

// Binary symmetric ROI adjacency with self-loops on the diagonal.
struct EdgeMatrix {
  Array adjacency;  // d x d, entries in {0, 1}
  double threshold = 0.0;
  std::string source;  // "transcriptomic" or a modality id

  std::size_t order() const { return adjacency.extent(0); }
  bool has_edge(std::size_t i, std::size_t j) const { return adjacency.at(i, j) != 0.0; }
  std::size_t edge_count() const;  // undirected, self-loops excluded
};

// One subject's graph for one modality and view.
struct SampleGraph {
  std::shared_ptr<const EdgeMatrix> edges;
  Array node_features;  // d x f
  std::string sample_id;
  View view = View::kTranscriptomic;
  std::string modality;
};

// Pearson correlation. Throws ZeroVarianceError if either input is constant
// and DimensionError if the lengths differ or are below 2.
double pearson(std::span<const double> x, std::span<const double> y);

// Pairwise Pearson correlation between the columns of a rows x d matrix.
// `names` (optional, size d) is used in error messages.
Array correlation_matrix(const Array& columns, std::span<const std::string> names = {});

// Edge (i, j) for i != j iff r(column i, column j) >= lambda; the diagonal is
// always 1. Constant columns raise ZeroVarianceError naming the column.
EdgeMatrix build_edge_matrix(const Array& columns, double lambda, std::string source = {},
                             std::span<const std::string> names = {});

// For every sample i: the T-RRI graph over `transcriptomic` and the R-RRI
// graph over `radiomic`, both with node features = row i of X as d x 1.
std::vector<std::pair<SampleGraph, SampleGraph>> assemble_sample_graphs(
    const FeatureMatrix& features, std::shared_ptr<const EdgeMatrix> transcriptomic,
    std::shared_ptr<const EdgeMatrix> radiomic, std::span<const std::string> sample_ids = {});

// Whitespace-separated d x d 0/1 text matrix, one row per line.
void write_edge_matrix(const EdgeMatrix& edges, const std::filesystem::path& path);
EdgeMatrix read_edge_matrix(const std::filesystem::path& path);

}  // namespace tmm::rri
