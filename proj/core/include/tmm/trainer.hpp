#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tmm/data.hpp"
#include "tmm/model.hpp"

// Optimization, evaluation metrics and the cross-validation harness.
namespace tmm::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  std::size_t epochs = 300;
  double eta1 = 1.0;
  double eta2 = 1.0;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on non-positive rate/epochs or negative eta/decay
};

inline constexpr double kBeta1 = 0.9;
inline constexpr double kBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::map<std::string, Array> m;
  std::map<std::string, Array> v;
  std::size_t step = 0;
};

// One Adam step with decoupled weight decay: p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
// Non-finite gradients raise NumericError before anything is modified.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const TrainConfig& config);

// Full-batch training of an already built model. Returns the per-epoch total
// loss. A non-finite value aborts with NumericError naming the epoch.
std::vector<double> fit(model::TmmModel& model, const std::vector<Array>& features, std::span<const int> labels,
                        const TrainConfig& config);

struct TrainResult {
  model::TmmModel model;
  std::vector<double> history;
};

// build_model on `rows` (seeded with config.seed) followed by fit.
TrainResult train(const data::Dataset& dataset, std::span<const std::size_t> rows,
                  const model::ModelConfig& model_config, const TrainConfig& config);

struct Metrics {
  double acc = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
};

double accuracy(std::span<const int> labels, std::span<const int> predicted);
// Binary: F1 of class 1. More classes: support-weighted mean of per-class F1.
double f1_score(std::span<const int> labels, std::span<const int> predicted, std::size_t classes);
// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counting 1/2. Throws DegenerateError if a class is absent.
double auc(std::span<const double> scores, std::span<const int> positive);
// Argmax predictions; AUC on the class-1 probability for C = 2, otherwise the
// macro one-vs-rest mean.
Metrics compute_metrics(const Array& probs, std::span<const int> labels);
std::vector<int> argmax_rows(const Array& probs);

Metrics evaluate(const model::TmmModel& model, const data::Dataset& dataset, std::span<const std::size_t> rows);

struct MetricsReport {
  std::string task;
  std::vector<Metrics> folds;

  Metrics mean() const;
  Metrics stddev() const;  // sample standard deviation (n - 1)
  std::vector<double> column(double Metrics::*field) const;
};

// Stratified k folds (seeded with config.seed); fold f trains with seed
// config.seed + f.
MetricsReport cross_validate(const data::Dataset& dataset, std::size_t k, const model::ModelConfig& model_config,
                             const TrainConfig& config, const std::string& task);

// CSV with columns task,fold,acc,f1,auc.
void write_report_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
// "<task>  ACC 97.5±1.2  F1 ...  AUC ..." in percent.
std::string summary_line(const MetricsReport& report);

// Two-sided Welch t-test p-value. Needs at least 2 values per sample; throws
// DegenerateError if both samples have zero variance.
double welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace tmm::train
