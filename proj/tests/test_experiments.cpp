#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "support/support.hpp"
#include "tmm/experiments.hpp"

using namespace tmm;

TEST(Variants, SixRowsInOrder) {
  const auto rows = experiments::ablation_variants(model::ModelConfig{});
  ASSERT_EQ(rows.size(), 6u);
  const std::vector<std::pair<bool, bool>> views = {{true, true}, {false, true}, {true, false},
                                                    {false, false}, {true, true}, {true, true}};
  const std::vector<confidence::Mode> modes = {confidence::Mode::kTfcp, confidence::Mode::kTfcp,
                                               confidence::Mode::kTfcp, confidence::Mode::kTfcp,
                                               confidence::Mode::kTcp,  confidence::Mode::kNn};
  std::set<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].config.use_trri, views[i].first) << i;
    EXPECT_EQ(rows[i].config.use_rri, views[i].second) << i;
    EXPECT_EQ(rows[i].config.confidence, modes[i]) << i;
    EXPECT_EQ(rows[i].label, experiments::variant_label(rows[i].config));
    labels.insert(rows[i].label);
  }
  EXPECT_EQ(labels.size(), 6u);
  EXPECT_EQ(rows[1].label, "no-T-RRI");
  EXPECT_EQ(rows[4].label, "TCP");
}

TEST(Variants, KeepBaseHyperparameters) {
  model::ModelConfig base;
  base.lambda_t = 0.45;
  base.encoder.heads = 2;
  for (const auto& v : experiments::ablation_variants(base)) {
    EXPECT_EQ(v.config.lambda_t, 0.45);
    EXPECT_EQ(v.config.encoder.heads, 2u);
  }
}

TEST(Subsets, OrderedBySizeThenLexicographic) {
  using S = std::vector<std::vector<std::size_t>>;
  EXPECT_EQ(experiments::modality_subsets(3), (S{{0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}, {0, 1, 2}}));
  EXPECT_EQ(experiments::modality_subsets(1), (S{{0}}));
}

TEST(Grid, DefaultValues) {
  const auto v = experiments::default_lambda_values();
  ASSERT_EQ(v.size(), 6u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], 0.1 * (i + 1), 1e-12);
}

namespace {

data::Dataset small_set() {
  data::SyntheticSpec spec;
  spec.n = 20;
  spec.d = 6;
  spec.n_g = 20;
  spec.modalities = 2;
  spec.n_blocks = 2;
  spec.informative = 3;
  return data::generate_synthetic(spec, 2).dataset;
}

train::TrainConfig few_epochs() {
  train::TrainConfig t;
  t.epochs = 3;
  t.learning_rate = 1e-2;
  return t;
}

}  // namespace

TEST(Grid, CellsAndCsv) {
  const std::vector<double> values = {0.1, 0.5};
  const auto cells = experiments::grid_lambda(small_set(), test::toy_config(), few_epochs(), {2, 1}, values);
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1].lambda_t, 0.1);
  EXPECT_EQ(cells[1].lambda_r, 0.5);
  for (const auto& c : cells) EXPECT_EQ(c.report.folds.size(), 1u);
  const auto path = std::filesystem::temp_directory_path() / "tmm_grid.csv";
  experiments::write_grid_csv(cells, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lambda_t,lambda_r,acc_mean,acc_std,f1_mean,auc_mean");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4u);
  std::filesystem::remove(path);
}

TEST(Compare, FirstRowHasUnitPValue) {
  const auto base = test::toy_config();
  std::vector<experiments::Variant> variants = {{"full", base}};
  model::ModelConfig nn = base;
  nn.confidence = confidence::Mode::kNn;
  variants.push_back({experiments::variant_label(nn), nn});
  const auto rows = experiments::compare(small_set(), variants, few_epochs(), {2, 0});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].p_acc, 1.0);
  EXPECT_EQ(rows[0].report.folds.size(), 2u);
  const double p = rows[1].p_acc;
  EXPECT_TRUE(std::isnan(p) || (p >= 0.0 && p <= 1.0));
}
