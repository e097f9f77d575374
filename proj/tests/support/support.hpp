#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/grad_check.hpp"
#include "tmm/ops.hpp"
#include "tmm/tape.hpp"

namespace tmm::test {

inline Array random_array(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(shape);
  for (double& v : a.data()) v = u(rng);
  return a;
}

// Sum of out * W for a fixed random W, so every output entry gets its own
// upstream gradient.
inline Var probe(Var out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Var w = out.tape()->constant(random_array(out.shape(), rng));
  return ops::sum(ops::mul(out, w));
}

// Symmetric 0/1 mask with self-loops and random off-diagonal edges.
inline Array random_mask(std::size_t d, std::mt19937_64& rng, double density = 0.5) {
  std::bernoulli_distribution edge(density);
  Array m({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    m.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < d; ++j) {
      const double e = edge(rng) ? 1.0 : 0.0;
      m.at(i, j) = e;
      m.at(j, i) = e;
    }
  }
  return m;
}

// A differentiable function with a generator for its evaluation points.
struct GradCase {
  std::string name;
  ScalarFn fn;
  std::function<std::vector<Array>(std::mt19937_64&)> point;
};

// One case per differentiable primitive.
std::vector<GradCase> primitive_grad_cases();

}  // namespace tmm::test

namespace tmm::test {

// Double-loop PCC threshold, written independently of the library: edge (i, j)
// iff r >= lambda for i != j, ones on the diagonal.
inline Array oracle_adjacency(const Array& x, double lambda) {
  const std::size_t n = x.extent(0);
  const std::size_t d = x.extent(1);
  Array adj({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) {
        adj.at(i, j) = 1.0;
        continue;
      }
      long double mi = 0, mj = 0;
      for (std::size_t r = 0; r < n; ++r) {
        mi += x.at(r, i);
        mj += x.at(r, j);
      }
      mi /= n;
      mj /= n;
      long double sij = 0, sii = 0, sjj = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const long double a = x.at(r, i) - mi;
        const long double b = x.at(r, j) - mj;
        sij += a * b;
        sii += a * a;
        sjj += b * b;
      }
      const long double pcc = sij / std::sqrt(sii * sjj);
      adj.at(i, j) = pcc >= lambda ? 1.0 : 0.0;
    }
  }
  return adj;
}

}  // namespace tmm::test

#include "tmm/data.hpp"
#include "tmm/model.hpp"

namespace tmm::test {

// A model small enough for finite differences: n=4, d=6, M=2, C=2.
struct Toy {
  data::Dataset dataset;
  model::TmmModel model;
  std::vector<Array> features;
};

Toy make_toy(const model::ModelConfig& config, std::uint64_t seed = 1);
model::ModelConfig toy_config();

// grad_check of the composite training loss with respect to every model
// parameter, at the model's initial point.
double full_loss_grad_error(const Toy& toy, model::LossWeights weights = {});

}  // namespace tmm::test
