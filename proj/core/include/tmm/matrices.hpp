#pragma once

#include <string>
#include <vector>

#include "tmm/array.hpp"

namespace tmm {

// Gene expression, one row per gene and one column per ROI.
struct ExpressionMatrix {
  Array values;  // n_g x d
  std::vector<std::string> gene_ids;
  std::vector<std::string> roi_ids;
};

// ROI-level imaging measurements of one modality, one row per sample.
struct FeatureMatrix {
  Array values;  // n x d
  std::vector<std::string> roi_ids;
  std::string modality;
};

}  // namespace tmm
