#pragma once

#include <span>
#include <string>
#include <vector>

#include "tmm/data.hpp"
#include "tmm/model.hpp"
#include "tmm/trainer.hpp"

// Comparison studies built on cross_validate: the ablation grid, the
// threshold sweep and modality subsets.
namespace tmm::experiments {

// How each configuration is scored: a stratified k-fold split of which the
// first `folds_run` folds are trained and evaluated (0 = all k).
struct Protocol {
  std::size_t k = 5;
  std::size_t folds_run = 0;
};

train::MetricsReport evaluate_config(const data::Dataset& dataset, const model::ModelConfig& config,
                                     const train::TrainConfig& train_config, const Protocol& protocol,
                                     const std::string& task);

struct Variant {
  std::string label;
  model::ModelConfig config;
};

// The ablation rows: full model, no-T-RRI, no-R-RRI, no-RRI (all TFCP), then
// the full graph with TCP and with NN confidence.
std::vector<Variant> ablation_variants(const model::ModelConfig& base);
// Label of a single configuration, e.g. "no-T-RRI" or "TCP".
std::string variant_label(const model::ModelConfig& config);

struct Comparison {
  std::string label;
  model::ModelConfig config;
  train::MetricsReport report;
  double p_acc = 1.0;  // Welch p-value of per-fold ACC against the first row
};

std::vector<Comparison> compare(const data::Dataset& dataset, const std::vector<Variant>& variants,
                                const train::TrainConfig& train_config, const Protocol& protocol);

// CSV: label,trri,rri,confidence,acc_mean,acc_std,f1_mean,f1_std,auc_mean,auc_std,p_acc
void write_comparison_csv(const std::vector<Comparison>& rows, const std::filesystem::path& path);

struct GridCell {
  double lambda_t = 0.0;
  double lambda_r = 0.0;
  train::MetricsReport report;
};

// {0.1, 0.2, ..., 0.6}
std::vector<double> default_lambda_values();

std::vector<GridCell> grid_lambda(const data::Dataset& dataset, const model::ModelConfig& base,
                                  const train::TrainConfig& train_config, const Protocol& protocol,
                                  std::span<const double> values);

// CSV: lambda_t,lambda_r,acc_mean,acc_std,f1_mean,auc_mean
void write_grid_csv(const std::vector<GridCell>& cells, const std::filesystem::path& path);

// Every non-empty subset of modality indices, ordered by size then lexicographically.
std::vector<std::vector<std::size_t>> modality_subsets(std::size_t modalities);

}  // namespace tmm::experiments
