#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "tmm/data.hpp"
#include "tmm/gat.hpp"
#include "tmm/model.hpp"
#include "tmm/ops.hpp"
#include "tmm/rri.hpp"
#include "tmm/trainer.hpp"

using namespace tmm;

namespace {

Array random_array(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Array a(shape);
  for (double& v : a.data()) v = u(rng);
  return a;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = state.range(0);
  std::mt19937_64 rng(1);
  const Array a = random_array({n, n}, rng);
  const Array b = random_array({n, n}, rng);
  for (auto _ : state) {
    Tape tape;
    Var out = ops::matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(out.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128);

void BM_PccEdges(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Array x = random_array({static_cast<std::size_t>(state.range(0)), 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(rri::build_edge_matrix(x, 0.1).adjacency.data().data());
}
BENCHMARK(BM_PccEdges)->Arg(200)->Arg(400);

// One GAT layer over a batch of 320 graphs with 32 nodes, forward and backward.
void BM_GatLayer(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const std::size_t batch = 320, d = 32, f_in = 16, heads = 2, width = 16;
  const Array h = random_array({batch, d, f_in}, rng);
  const Array w = random_array({f_in, heads * width}, rng);
  const Array a_src = random_array({heads, width}, rng);
  const Array a_dst = random_array({heads, width}, rng);
  rri::EdgeMatrix edges;
  edges.adjacency = rri::build_edge_matrix(random_array({100, d}, rng), 0.1).adjacency;
  for (auto _ : state) {
    Tape tape;
    gat::GatLayerParams p{tape.parameter("w", w), tape.parameter("as", a_src), tape.parameter("ad", a_dst)};
    Var out = ops::sum(gat::gat_layer(tape.constant(h), edges, p));
    benchmark::DoNotOptimize(tape.backward(out).size());
  }
}
BENCHMARK(BM_GatLayer)->Unit(benchmark::kMillisecond);

// One full-batch training epoch of the default model on the default synthetic set.
void BM_TrainingEpoch(benchmark::State& state) {
  const data::Dataset ds = data::generate_synthetic(data::SyntheticSpec{}, 0).dataset;
  std::vector<std::size_t> rows(ds.samples());
  std::iota(rows.begin(), rows.end(), 0);
  model::TmmModel m = model::build_model(ds, rows, model::ModelConfig{}, 0);
  const auto features = model::prepare_features(m, ds, rows);
  train::TrainConfig config;
  config.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train::fit(m, features, ds.labels, config).front());
}
BENCHMARK(BM_TrainingEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
