#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "tmm/biomarker.hpp"
#include "tmm/config.hpp"
#include "tmm/confidence.hpp"
#include "tmm/data.hpp"
#include "tmm/errors.hpp"
#include "tmm/experiments.hpp"
#include "tmm/model.hpp"
#include "tmm/rri.hpp"
#include "tmm/trainer.hpp"

namespace fs = std::filesystem;
using namespace tmm;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

// Options shared by every subcommand that trains or evaluates.
struct Common {
  std::string config_path;
  std::string data_dir;
  std::string task;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
};

void add_common(CLI::App* cmd, Common& c, bool with_data) {
  cmd->add_option("--config", c.config_path, "run configuration ([spec], [train], [model] sections)")
      ->check(CLI::ExistingFile);
  if (with_data) {
    cmd->add_option("--data", c.data_dir, "dataset directory")->check(CLI::ExistingDirectory);
    cmd->add_option("--task", c.task, "'synthetic' generates the dataset from the config's [spec]");
  }
  cmd->add_option("--out", c.out_dir, "output directory");
  cmd->add_option("--seed", c.seed, "seed for data generation, splits and initialization");
  cmd->add_option("--epochs", c.epochs, "override train.epochs");
  cmd->add_option("--lr", c.learning_rate, "override train.learning_rate");
}

config::RunConfig resolve_config(const Common& c) {
  config::RunConfig rc = c.config_path.empty() ? config::RunConfig{} : config::load_config(c.config_path);
  if (c.seed) rc.train.seed = *c.seed;
  if (c.epochs) rc.train.epochs = *c.epochs;
  if (c.learning_rate) rc.train.learning_rate = *c.learning_rate;
  rc.train.validate();
  return rc;
}

struct Loaded {
  data::Dataset dataset;
  std::string task;
  std::vector<fs::path> inputs;
};

Loaded load_data(const Common& c, const config::RunConfig& rc) {
  if (!c.data_dir.empty() && !c.task.empty() && c.task == "synthetic") {
    throw UsageError("--data and --task synthetic are mutually exclusive");
  }
  if (c.task == "synthetic") {
    return {data::generate_synthetic(rc.spec, rc.train.seed).dataset, "synthetic", {}};
  }
  if (c.data_dir.empty()) throw UsageError("a dataset is required: pass --data DIR or --task synthetic");
  Loaded out{data::load_dataset(c.data_dir), c.task.empty() ? fs::path(c.data_dir).filename().string() : c.task, {}};
  for (const auto& entry : fs::directory_iterator(c.data_dir)) {
    if (entry.path().extension() == ".csv") out.inputs.push_back(entry.path());
  }
  std::sort(out.inputs.begin(), out.inputs.end());
  return out;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

cli::Manifest manifest_for(const std::string& command, const std::vector<std::string>& argv,
                           const config::RunConfig& rc, std::vector<fs::path> inputs) {
  cli::Manifest m;
  m.command = command;
  m.argv = argv;
  m.seed = rc.train.seed;
  m.config_text = config::to_text(rc);
  m.inputs = std::move(inputs);
  return m;
}

std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Multi-view multi-modal graph attention classifier with confidence-weighted fusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TMM_VERSION));

  // gen-data
  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset with planted ground truth");
  add_common(gen_cmd, gen, false);

  // build-rri
  Common rri_opts;
  std::optional<double> lambda_t;
  std::optional<double> lambda_r;
  auto* rri_cmd = app.add_subcommand("build-rri", "build T-RRI and per-modality R-RRI edge matrices");
  add_common(rri_cmd, rri_opts, true);
  rri_cmd->add_option("--lambda-t", lambda_t, "transcriptomic threshold (default from config)");
  rri_cmd->add_option("--lambda-r", lambda_r, "radiomic threshold (default from config)");

  // train
  Common train_opts;
  auto* train_cmd = app.add_subcommand("train", "train on every sample and save the model");
  add_common(train_cmd, train_opts, true);

  // cv
  Common cv_opts;
  std::size_t cv_k = 5;
  auto* cv_cmd = app.add_subcommand("cv", "stratified k-fold cross-validation report");
  add_common(cv_cmd, cv_opts, true);
  cv_cmd->add_option("--k", cv_k, "number of folds")->check(CLI::Range(2, 1000));

  // ablate
  Common ab_opts;
  std::size_t ab_k = 5;
  std::size_t ab_folds_run = 0;
  bool no_trri = false;
  bool no_rri = false;
  std::string ab_confidence;
  auto* ab_cmd = app.add_subcommand("ablate", "compare the full model with ablated variants");
  add_common(ab_cmd, ab_opts, true);
  ab_cmd->add_option("--k", ab_k, "number of folds")->check(CLI::Range(2, 1000));
  ab_cmd->add_option("--folds-run", ab_folds_run, "train only the first N folds (0 = all)");
  ab_cmd->add_flag("--no-trri", no_trri, "drop the transcriptomic view");
  ab_cmd->add_flag("--no-rri", no_rri, "drop the radiomic view");
  ab_cmd->add_option("--confidence", ab_confidence, "confidence arm")->check(CLI::IsMember({"tfcp", "tcp", "nn"}));

  // rank-biomarkers
  Common rank_opts;
  std::string rank_model;
  std::size_t rank_k = 5;
  std::size_t rank_fold = 0;
  auto* rank_cmd = app.add_subcommand("rank-biomarkers", "feature-ablation ROI ranking on a held-out fold");
  add_common(rank_cmd, rank_opts, true);
  rank_cmd->add_option("--model", rank_model, "trained model (otherwise trained on the fold's training rows)")
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--k", rank_k, "number of folds")->check(CLI::Range(2, 1000));
  rank_cmd->add_option("--fold", rank_fold, "held-out fold index");

  // export-connectivity
  Common conn_opts;
  std::string conn_ranking;
  std::string conn_source = "transcriptomic";
  std::size_t conn_top_k = 10;
  auto* conn_cmd = app.add_subcommand("export-connectivity", "node and edge files for the top-ranked ROIs");
  add_common(conn_cmd, conn_opts, true);
  conn_cmd->add_option("--ranking", conn_ranking, "ranking CSV from rank-biomarkers")
      ->required()
      ->check(CLI::ExistingFile);
  conn_cmd->add_option("--source", conn_source, "'transcriptomic' or a modality id");
  conn_cmd->add_option("--top-k", conn_top_k, "number of ROIs")->check(CLI::PositiveNumber);

  // grid-lambda
  Common grid_opts;
  std::size_t grid_k = 5;
  std::size_t grid_folds_run = 0;
  std::vector<double> grid_values = experiments::default_lambda_values();
  auto* grid_cmd = app.add_subcommand("grid-lambda", "sweep lambda_t x lambda_r");
  add_common(grid_cmd, grid_opts, true);
  grid_cmd->add_option("--k", grid_k, "number of folds")->check(CLI::Range(2, 1000));
  grid_cmd->add_option("--folds-run", grid_folds_run, "train only the first N folds (0 = all)");
  grid_cmd->add_option("--values", grid_values, "threshold values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }

  try {
    if (*gen_cmd) {
      const config::RunConfig rc = resolve_config(gen);
      const fs::path out = prepare_out(gen.out_dir);
      const data::Synthetic syn = data::generate_synthetic(rc.spec, rc.train.seed);
      data::save_dataset(syn.dataset, out);
      data::write_ground_truth(syn.truth, out / "ground_truth.txt");
      cli::Manifest m = manifest_for("gen-data", args, rc, {});
      if (!gen.config_path.empty()) m.inputs.push_back(gen.config_path);
      for (const auto& entry : fs::directory_iterator(out)) {
        if (entry.path().filename() != "manifest.json") m.outputs.push_back(entry.path());
      }
      std::sort(m.outputs.begin(), m.outputs.end());
      cli::write_manifest(m, out);
      std::cout << "wrote " << syn.dataset.samples() << " samples x " << syn.dataset.rois() << " ROIs x "
                << syn.dataset.modality_count() << " modalities to " << out.string() << '\n';
    } else if (*rri_cmd) {
      const config::RunConfig rc = resolve_config(rri_opts);
      const Loaded in = load_data(rri_opts, rc);
      const fs::path out = prepare_out(rri_opts.out_dir);
      const double lt = lambda_t.value_or(rc.model.lambda_t);
      const double lr = lambda_r.value_or(rc.model.lambda_r);
      cli::Manifest m = manifest_for("build-rri", args, rc, in.inputs);
      const rri::EdgeMatrix et =
          rri::build_edge_matrix(in.dataset.expression.values, lt, "transcriptomic", in.dataset.roi_ids());
      rri::write_edge_matrix(et, out / "edges_transcriptomic.txt");
      m.outputs.push_back(out / "edges_transcriptomic.txt");
      std::cout << "T-RRI (lambda " << lt << "): " << et.edge_count() << " edges\n";
      for (const FeatureMatrix& f : in.dataset.modalities) {
        const rri::EdgeMatrix er = rri::build_edge_matrix(f.values, lr, f.modality, f.roi_ids);
        const fs::path p = out / ("edges_" + f.modality + ".txt");
        rri::write_edge_matrix(er, p);
        m.outputs.push_back(p);
        std::cout << "R-RRI " << f.modality << " (lambda " << lr << "): " << er.edge_count() << " edges\n";
      }
      m.extra = {{"lambda_t", format_double(lt, "%g")}, {"lambda_r", format_double(lr, "%g")}};
      cli::write_manifest(m, out);
    } else if (*train_cmd) {
      const config::RunConfig rc = resolve_config(train_opts);
      const Loaded in = load_data(train_opts, rc);
      const fs::path out = prepare_out(train_opts.out_dir);
      std::vector<std::size_t> rows(in.dataset.samples());
      std::iota(rows.begin(), rows.end(), 0);
      const train::TrainResult result = train::train(in.dataset, rows, rc.model, rc.train);
      model::save_model(result.model, out / "model.json");
      {
        std::ofstream hist(out / "history.csv");
        if (!hist) throw IoError("cannot write " + (out / "history.csv").string());
        hist << "epoch,loss\n";
        for (std::size_t e = 0; e < result.history.size(); ++e) {
          hist << e << ',' << format_double(result.history[e], "%.9g") << '\n';
        }
      }
      const auto conf = model::estimate_confidence(result.model,
                                                   model::prepare_features(result.model, in.dataset, rows));
      std::vector<confidence::ScoreRow> scores;
      for (std::size_t m = 0; m < conf.size(); ++m) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          scores.push_back({in.dataset.sample_ids[rows[i]], result.model.modalities[m], conf[m][i].tcp,
                            conf[m][i].fcp, conf[m][i].weight});
        }
      }
      confidence::write_scores_csv(scores, out / "confidence.csv");
      const train::Metrics fit = train::evaluate(result.model, in.dataset, rows);
      cli::Manifest m = manifest_for("train", args, rc, in.inputs);
      m.outputs = {out / "model.json", out / "history.csv", out / "confidence.csv"};
      cli::write_manifest(m, out);
      std::cout << "trained " << rc.train.epochs << " epochs; final loss "
                << format_double(result.history.back(), "%.6g") << "; training ACC " << format_double(fit.acc, "%.4f")
                << '\n';
    } else if (*cv_cmd) {
      const config::RunConfig rc = resolve_config(cv_opts);
      const Loaded in = load_data(cv_opts, rc);
      const fs::path out = prepare_out(cv_opts.out_dir);
      const train::MetricsReport report = train::cross_validate(in.dataset, cv_k, rc.model, rc.train, in.task);
      train::write_report_csv({report}, out / "report.csv");
      {
        std::ofstream summary(out / "summary.txt");
        summary << train::summary_line(report) << '\n';
      }
      cli::Manifest m = manifest_for("cv", args, rc, in.inputs);
      m.outputs = {out / "report.csv", out / "summary.txt"};
      m.extra = {{"k", std::to_string(cv_k)}};
      cli::write_manifest(m, out);
      std::cout << train::summary_line(report) << '\n';
    } else if (*ab_cmd) {
      const config::RunConfig rc = resolve_config(ab_opts);
      const Loaded in = load_data(ab_opts, rc);
      const fs::path out = prepare_out(ab_opts.out_dir);
      std::vector<experiments::Variant> variants;
      if (!no_trri && !no_rri && ab_confidence.empty()) {
        variants = experiments::ablation_variants(rc.model);
      } else {
        model::ModelConfig full = rc.model;
        full.use_trri = true;
        full.use_rri = true;
        full.confidence = confidence::Mode::kTfcp;
        model::ModelConfig v = full;
        v.use_trri = !no_trri;
        v.use_rri = !no_rri;
        if (!ab_confidence.empty()) v.confidence = confidence::parse_mode(ab_confidence);
        variants = {{experiments::variant_label(full), full}, {experiments::variant_label(v), v}};
      }
      const auto rows = experiments::compare(in.dataset, variants, rc.train, {ab_k, ab_folds_run});
      experiments::write_comparison_csv(rows, out / "ablation.csv");
      std::vector<train::MetricsReport> reports;
      for (const auto& r : rows) reports.push_back(r.report);
      train::write_report_csv(reports, out / "report.csv");
      cli::Manifest m = manifest_for("ablate", args, rc, in.inputs);
      m.outputs = {out / "ablation.csv", out / "report.csv"};
      cli::write_manifest(m, out);
      for (const auto& r : rows) std::cout << train::summary_line(r.report) << "  p=" << r.p_acc << '\n';
    } else if (*rank_cmd) {
      const config::RunConfig rc = resolve_config(rank_opts);
      const Loaded in = load_data(rank_opts, rc);
      const fs::path out = prepare_out(rank_opts.out_dir);
      if (rank_fold >= rank_k) throw UsageError("--fold must be below --k");
      const data::FoldSplit split = data::stratified_split(in.dataset.labels, rank_k, rc.train.seed);
      model::TmmModel model;
      cli::Manifest m = manifest_for("rank-biomarkers", args, rc, in.inputs);
      if (!rank_model.empty()) {
        model = model::load_model(rank_model);
        m.inputs.push_back(rank_model);
      } else {
        model = train::train(in.dataset, split.train(rank_fold), rc.model, rc.train).model;
      }
      const biomarker::BiomarkerRanking ranking =
          biomarker::feature_ablation_rank(model, in.dataset, split.test(rank_fold));
      biomarker::write_ranking_csv(ranking, out / "ranking.csv");
      m.outputs = {out / "ranking.csv"};
      m.extra = {{"k", std::to_string(rank_k)}, {"fold", std::to_string(rank_fold)}};
      cli::write_manifest(m, out);
      for (std::size_t i = 0; i < std::min<std::size_t>(10, ranking.size()); ++i) {
        std::cout << i + 1 << ". " << ranking[i].roi_id << " (" << ranking[i].modality << ") "
                  << format_double(ranking[i].score, "%.4f") << '\n';
      }
    } else if (*conn_cmd) {
      const config::RunConfig rc = resolve_config(conn_opts);
      const Loaded in = load_data(conn_opts, rc);
      const fs::path out = prepare_out(conn_opts.out_dir);
      const Array* columns = nullptr;
      if (conn_source == "transcriptomic") {
        columns = &in.dataset.expression.values;
      } else {
        for (const FeatureMatrix& f : in.dataset.modalities) {
          if (f.modality == conn_source) columns = &f.values;
        }
      }
      if (columns == nullptr) throw UsageError("unknown --source '" + conn_source + "'");
      auto ranking = biomarker::read_ranking_csv(conn_ranking);
      // The CSV names modalities; node colors follow this dataset's order.
      for (auto& entry : ranking) {
        bool known = false;
        for (std::size_t m = 0; m < in.dataset.modality_count(); ++m) {
          if (in.dataset.modalities[m].modality == entry.modality) {
            entry.modality_index = m;
            known = true;
          }
        }
        if (!known) throw DataError("ranking lists modality '" + entry.modality + "' absent from the dataset");
      }
      const auto conn = biomarker::build_connectivity(*columns, in.dataset.roi_ids(), ranking, conn_top_k);
      const fs::path node_path = out / ("connectivity_" + conn_source + ".node");
      const fs::path edge_path = out / ("connectivity_" + conn_source + ".edge");
      biomarker::write_connectivity(conn, node_path, edge_path);
      cli::Manifest m = manifest_for("export-connectivity", args, rc, in.inputs);
      m.inputs.push_back(conn_ranking);
      m.outputs = {node_path, edge_path};
      cli::write_manifest(m, out);
      std::cout << "wrote " << node_path.string() << " and " << edge_path.string() << '\n';
    } else if (*grid_cmd) {
      const config::RunConfig rc = resolve_config(grid_opts);
      const Loaded in = load_data(grid_opts, rc);
      const fs::path out = prepare_out(grid_opts.out_dir);
      const auto cells =
          experiments::grid_lambda(in.dataset, rc.model, rc.train, {grid_k, grid_folds_run}, grid_values);
      experiments::write_grid_csv(cells, out / "grid.csv");
      double lo = 1.0;
      double hi = 0.0;
      for (const auto& c : cells) {
        lo = std::min(lo, c.report.mean().acc);
        hi = std::max(hi, c.report.mean().acc);
      }
      cli::Manifest m = manifest_for("grid-lambda", args, rc, in.inputs);
      m.outputs = {out / "grid.csv"};
      cli::write_manifest(m, out);
      std::cout << cells.size() << " cells; ACC range " << format_double(lo, "%.4f") << " .. "
                << format_double(hi, "%.4f") << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}
