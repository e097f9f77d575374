#include "tmm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "tmm/errors.hpp"

namespace tmm::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || epochs == 0) throw ConfigError("learning rate and epochs must be positive");
  if (!(weight_decay >= 0.0) || !(eta1 >= 0.0) || !(eta2 >= 0.0)) {
    throw ConfigError("weight decay and loss weights must be non-negative");
  }
}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const TrainConfig& config) {
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw UsageError("no gradient for parameter '" + name + "'");
    if (it->second.shape() != value.shape()) {
      throw DimensionError("gradient of '" + name + "' has shape " + shape_string(it->second.shape()) +
                           ", parameter " + shape_string(value.shape()));
    }
    if (!it->second.all_finite()) throw NumericError("non-finite gradient for '" + name + "'; step aborted");
  }
  ++state.step;
  const double lr = config.learning_rate;
  const double decay = 1.0 - lr * config.weight_decay;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, value] : params) {
    const Array& g = grads.at(name);
    auto [mi, m_new] = state.m.try_emplace(name, value.shape(), 0.0);
    auto [vi, v_new] = state.v.try_emplace(name, value.shape(), 0.0);
    Array& m = mi->second;
    Array& v = vi->second;
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] = value[i] * decay - lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
  }
}

std::vector<double> fit(model::TmmModel& model, const std::vector<Array>& features, std::span<const int> labels,
                        const TrainConfig& config) {
  config.validate();
  AdamState state;
  std::vector<double> history;
  history.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    try {
      Tape tape;
      const auto params = bind_parameters(tape, model.params);
      const model::Output out =
          model::forward(tape, params, model, features, labels, {config.eta1, config.eta2});
      history.push_back(out.total.value().item());
      const Gradients grads = tape.backward(out.total);
      adam_step(model.params, grads, state, config);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return history;
}

TrainResult train(const data::Dataset& dataset, std::span<const std::size_t> rows,
                  const model::ModelConfig& model_config, const TrainConfig& config) {
  config.validate();
  if (dataset.classes() < 2) throw DataError("training needs at least 2 classes");
  TrainResult result{model::build_model(dataset, rows, model_config, config.seed), {}};
  std::vector<int> labels;
  for (std::size_t r : rows) labels.push_back(dataset.labels.at(r));
  result.history = fit(result.model, model::prepare_features(result.model, dataset, rows), labels, config);
  return result;
}

double accuracy(std::span<const int> labels, std::span<const int> predicted) {
  if (labels.size() != predicted.size() || labels.empty()) throw DimensionError("accuracy: size mismatch or empty");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

double class_f1(std::span<const int> labels, std::span<const int> predicted, int c) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == c && labels[i] == c) ++tp;
    else if (predicted[i] == c) ++fp;
    else if (labels[i] == c) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

double f1_score(std::span<const int> labels, std::span<const int> predicted, std::size_t classes) {
  if (labels.size() != predicted.size() || labels.empty()) throw DimensionError("f1_score: size mismatch or empty");
  if (classes <= 2) return class_f1(labels, predicted, 1);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto support = std::count(labels.begin(), labels.end(), static_cast<int>(c));
    total += static_cast<double>(support) * class_f1(labels, predicted, static_cast<int>(c));
  }
  return total / static_cast<double>(labels.size());
}

double auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw DimensionError("auc: size mismatch");
  // Rank-sum form with average ranks for ties.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]] != 0) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DegenerateError("auc is undefined when only one class is present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<int> argmax_rows(const Array& probs) {
  std::vector<int> out;
  const std::size_t c = probs.extent(1);
  for (std::size_t i = 0; i < probs.extent(0); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    }
    out.push_back(static_cast<int>(best));
  }
  return out;
}

Metrics compute_metrics(const Array& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.extent(0) != labels.size()) {
    throw DimensionError("compute_metrics: probabilities " + shape_string(probs.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = probs.extent(1);
  const std::vector<int> predicted = argmax_rows(probs);
  Metrics m;
  m.acc = accuracy(labels, predicted);
  m.f1 = f1_score(labels, predicted, classes);
  const auto one_vs_rest = [&](std::size_t c) {
    std::vector<double> scores;
    std::vector<int> positive;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores.push_back(probs.at(i, c));
      positive.push_back(labels[i] == static_cast<int>(c) ? 1 : 0);
    }
    return auc(scores, positive);
  };
  if (classes == 2) {
    m.auc = one_vs_rest(1);
  } else {
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += one_vs_rest(c);
    m.auc = total / static_cast<double>(classes);
  }
  return m;
}

Metrics evaluate(const model::TmmModel& model, const data::Dataset& dataset, std::span<const std::size_t> rows) {
  std::vector<int> labels;
  for (std::size_t r : rows) labels.push_back(dataset.labels.at(r));
  return compute_metrics(model::predict_proba(model, dataset, rows), labels);
}

std::vector<double> MetricsReport::column(double Metrics::*field) const {
  std::vector<double> out;
  for (const Metrics& m : folds) out.push_back(m.*field);
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

Metrics MetricsReport::mean() const {
  return {mean_of(column(&Metrics::acc)), mean_of(column(&Metrics::f1)), mean_of(column(&Metrics::auc))};
}

Metrics MetricsReport::stddev() const {
  return {std::sqrt(sample_var(column(&Metrics::acc))), std::sqrt(sample_var(column(&Metrics::f1))),
          std::sqrt(sample_var(column(&Metrics::auc)))};
}

MetricsReport cross_validate(const data::Dataset& dataset, std::size_t k, const model::ModelConfig& model_config,
                             const TrainConfig& config, const std::string& task) {
  const data::FoldSplit split = data::stratified_split(dataset.labels, k, config.seed);
  MetricsReport report;
  report.task = task;
  for (std::size_t f = 0; f < k; ++f) {
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + f;
    const std::vector<std::size_t> train_rows = split.train(f);
    const std::vector<std::size_t> test_rows = split.test(f);
    const TrainResult trained = train(dataset, train_rows, model_config, fold_config);
    report.folds.push_back(evaluate(trained.model, dataset, test_rows));
  }
  return report;
}

void write_report_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "task,fold,acc,f1,auc\n";
  char buf[160];
  for (const MetricsReport& r : reports) {
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      const Metrics& m = r.folds[f];
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f", f, m.acc, m.f1, m.auc);
      out << r.task << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::string summary_line(const MetricsReport& report) {
  const Metrics mu = report.mean();
  const Metrics sd = report.stddev();
  char buf[200];
  std::snprintf(buf, sizeof buf, "ACC %.1f±%.1f  F1 %.1f±%.1f  AUC %.1f±%.1f", 100 * mu.acc, 100 * sd.acc,
                100 * mu.f1, 100 * sd.f1, 100 * mu.auc, 100 * sd.auc);
  return report.task + "  " + buf;
}

double welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DegenerateError("welch_t_test needs at least 2 values per sample");
  const std::vector<double> va(a.begin(), a.end());
  const std::vector<double> vb(b.begin(), b.end());
  const double na = static_cast<double>(va.size());
  const double nb = static_cast<double>(vb.size());
  const double sa = sample_var(va) / na;
  const double sb = sample_var(vb) / nb;
  if (sa + sb == 0.0) throw DegenerateError("welch_t_test: both samples have zero variance");
  const double t = (mean_of(va) - mean_of(vb)) / std::sqrt(sa + sb);
  const double df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

}  // namespace tmm::train
