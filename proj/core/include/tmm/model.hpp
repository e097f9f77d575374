#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tmm/confidence.hpp"
#include "tmm/data.hpp"
#include "tmm/gat.hpp"
#include "tmm/rri.hpp"
#include "tmm/tape.hpp"

// The full multi-view multi-modal classifier: per modality two GAT encoders
// (T-RRI and R-RRI view), cross-view attention, an auxiliary classifier and
// confidence networks; then confidence weighting, cross-modal attention and
// the final classifier.
namespace tmm::model {

struct ModelConfig {
  gat::EncoderConfig encoder;
  std::size_t att_width = 32;
  std::size_t conf_hidden = 32;
  bool use_trri = true;
  bool use_rri = true;
  confidence::Mode confidence = confidence::Mode::kTfcp;
  double lambda_t = 0.2;
  double lambda_r = 0.1;

  void validate() const;
  // Width of Z^m: 2 f_att with both views, f_att with one, 1 with none.
  std::size_t modal_width() const;
  std::string variant_name() const;  // e.g. "T-RRI+R-RRI/TFCP"
};

struct TmmModel {
  ModelConfig config;
  std::vector<std::string> modalities;
  std::vector<std::string> roi_ids;
  std::size_t classes = 0;
  // Per-modality, per-ROI z-scoring fitted on the training rows.
  std::vector<std::vector<double>> feature_mean;
  std::vector<std::vector<double>> feature_scale;
  rri::EdgeMatrix transcriptomic;
  std::vector<rri::EdgeMatrix> radiomic;  // one per modality
  ParamStore params;
};

// Glorot-uniform weights (each drawn from a generator seeded by seed and the
// parameter name), zero biases.
ParamStore init_params(const ModelConfig& config, std::size_t d, std::size_t modalities, std::size_t classes,
                       std::uint64_t seed);

// Fits feature scaling on `train_rows`, builds the T-RRI from the expression
// matrix at lambda_t and each modality's R-RRI from its (scaled) training
// rows at lambda_r, and initializes parameters.
TmmModel build_model(const data::Dataset& dataset, std::span<const std::size_t> train_rows,
                     const ModelConfig& config, std::uint64_t seed);

// Scaled features per modality for the given rows, [rows x d] each.
std::vector<Array> prepare_features(const TmmModel& model, const data::Dataset& dataset,
                                    std::span<const std::size_t> rows);

struct LossWeights {
  double eta1 = 1.0;
  double eta2 = 1.0;
};

struct Output {
  Var final_logits;                // [B, C]
  std::vector<Var> modal_logits;   // [B, C] per modality
  std::vector<Var> weights;        // confidence scalar per modality, [B, 1]
  std::vector<Var> tcp_hat;        // [B, 1]; unset in NN mode
  std::vector<Var> fcp_hat;        // [B, 1]; set in TFCP mode only
  // Set when labels are passed.
  Var l_gat;    // sum over modalities of the auxiliary classifier loss
  Var l_conf;   // sum over modalities of the confidence loss (0 in NN mode)
  Var l_final;  // mean cross-entropy of the final classifier
  Var total;    // eta1 l_gat + eta2 l_conf + l_final
};

// `params` must hold every entry of model.params bound on `tape`.
Output forward(Tape& tape, const std::map<std::string, Var>& params, const TmmModel& model,
               const std::vector<Array>& features, std::span<const int> labels = {}, LossWeights weights = {});

// Binds model.params as constants on `tape`.
std::map<std::string, Var> bind_constants(Tape& tape, const ParamStore& params);

// Softmax of the final logits, [rows x C].
Array predict_proba(const TmmModel& model, const std::vector<Array>& features);
Array predict_proba(const TmmModel& model, const data::Dataset& dataset, std::span<const std::size_t> rows);

// Per-sample confidence scalars per modality: [modality][row] of
// (tcp_hat, fcp_hat, weight). tcp/fcp are NaN where the mode lacks them.
struct ConfidenceEstimate {
  double tcp = 0.0;
  double fcp = 0.0;
  double weight = 0.0;
};
std::vector<std::vector<ConfidenceEstimate>> estimate_confidence(const TmmModel& model,
                                                                 const std::vector<Array>& features);

void save_model(const TmmModel& model, const std::filesystem::path& path);  // JSON
TmmModel load_model(const std::filesystem::path& path);

}  // namespace tmm::model
