#include "tmm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "tmm/errors.hpp"

namespace tmm::experiments {

train::MetricsReport evaluate_config(const data::Dataset& dataset, const model::ModelConfig& config,
                                     const train::TrainConfig& train_config, const Protocol& protocol,
                                     const std::string& task) {
  if (protocol.folds_run == 0 || protocol.folds_run >= protocol.k) {
    return train::cross_validate(dataset, protocol.k, config, train_config, task);
  }
  const data::FoldSplit split = data::stratified_split(dataset.labels, protocol.k, train_config.seed);
  train::MetricsReport report;
  report.task = task;
  for (std::size_t f = 0; f < protocol.folds_run; ++f) {
    train::TrainConfig fold_config = train_config;
    fold_config.seed = train_config.seed + f;
    const auto trained = train::train(dataset, split.train(f), config, fold_config);
    report.folds.push_back(train::evaluate(trained.model, dataset, split.test(f)));
  }
  return report;
}

std::string variant_label(const model::ModelConfig& c) {
  std::string graph;
  if (!c.use_trri && !c.use_rri) graph = "no-RRI";
  else if (!c.use_trri) graph = "no-T-RRI";
  else if (!c.use_rri) graph = "no-R-RRI";
  if (c.confidence == confidence::Mode::kTfcp) return graph.empty() ? "full" : graph;
  const std::string mode = confidence::mode_name(c.confidence);
  return graph.empty() ? mode : graph + "/" + mode;
}

std::vector<Variant> ablation_variants(const model::ModelConfig& base) {
  std::vector<Variant> out;
  const auto add = [&](bool trri, bool rri, confidence::Mode mode) {
    model::ModelConfig c = base;
    c.use_trri = trri;
    c.use_rri = rri;
    c.confidence = mode;
    out.push_back({variant_label(c), c});
  };
  add(true, true, confidence::Mode::kTfcp);
  add(false, true, confidence::Mode::kTfcp);
  add(true, false, confidence::Mode::kTfcp);
  add(false, false, confidence::Mode::kTfcp);
  add(true, true, confidence::Mode::kTcp);
  add(true, true, confidence::Mode::kNn);
  return out;
}

std::vector<Comparison> compare(const data::Dataset& dataset, const std::vector<Variant>& variants,
                                const train::TrainConfig& train_config, const Protocol& protocol) {
  std::vector<Comparison> rows;
  for (const Variant& v : variants) {
    rows.push_back({v.label, v.config, evaluate_config(dataset, v.config, train_config, protocol, v.label), 1.0});
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::vector<double> a = rows[0].report.column(&train::Metrics::acc);
    const std::vector<double> b = rows[i].report.column(&train::Metrics::acc);
    try {
      rows[i].p_acc = train::welch_t_test(a, b);
    } catch (const DegenerateError&) {
      // Too few folds or no spread: identical means give p = 1, otherwise undefined.
      const bool same = rows[0].report.mean().acc == rows[i].report.mean().acc;
      rows[i].p_acc = same ? 1.0 : std::nan("");
    }
  }
  return rows;
}

void write_comparison_csv(const std::vector<Comparison>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "label,trri,rri,confidence,acc_mean,acc_std,f1_mean,f1_std,auc_mean,auc_std,p_acc\n";
  char buf[200];
  for (const Comparison& r : rows) {
    const train::Metrics mu = r.report.mean();
    const train::Metrics sd = r.report.stddev();
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6g", mu.acc, sd.acc, mu.f1, sd.f1, mu.auc,
                  sd.auc, r.p_acc);
    out << r.label << ',' << (r.config.use_trri ? "yes" : "no") << ',' << (r.config.use_rri ? "yes" : "no") << ','
        << confidence::mode_name(r.config.confidence) << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> default_lambda_values() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}; }

std::vector<GridCell> grid_lambda(const data::Dataset& dataset, const model::ModelConfig& base,
                                  const train::TrainConfig& train_config, const Protocol& protocol,
                                  std::span<const double> values) {
  std::vector<GridCell> cells;
  for (double lt : values) {
    for (double lr : values) {
      model::ModelConfig c = base;
      c.lambda_t = lt;
      c.lambda_r = lr;
      char task[64];
      std::snprintf(task, sizeof task, "lt=%.2f,lr=%.2f", lt, lr);
      cells.push_back({lt, lr, evaluate_config(dataset, c, train_config, protocol, task)});
    }
  }
  return cells;
}

void write_grid_csv(const std::vector<GridCell>& cells, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "lambda_t,lambda_r,acc_mean,acc_std,f1_mean,auc_mean\n";
  char buf[160];
  for (const GridCell& c : cells) {
    const train::Metrics mu = c.report.mean();
    const train::Metrics sd = c.report.stddev();
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.6f,%.6f,%.6f,%.6f", c.lambda_t, c.lambda_r, mu.acc, sd.acc, mu.f1,
                  mu.auc);
    out << buf << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::size_t>> modality_subsets(std::size_t modalities) {
  if (modalities == 0 || modalities > 16) throw ConfigError("modality_subsets: need 1..16 modalities");
  std::vector<std::vector<std::size_t>> out;
  for (std::uint32_t mask = 1; mask < (1u << modalities); ++mask) {
    std::vector<std::size_t> subset;
    for (std::size_t m = 0; m < modalities; ++m) {
      if (mask & (1u << m)) subset.push_back(m);
    }
    out.push_back(std::move(subset));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

}  // namespace tmm::experiments
