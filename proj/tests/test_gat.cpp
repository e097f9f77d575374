#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support/support.hpp"
#include "tmm/errors.hpp"
#include "tmm/gat.hpp"
#include "tmm/grad_check.hpp"

using namespace tmm;

namespace {

struct RawLayer {
  Array weight;  // f_in x K f
  Array src;     // K x f
  Array dst;
};

RawLayer random_layer(std::size_t f_in, std::size_t heads, std::size_t width, std::mt19937_64& rng) {
  return {test::random_array({f_in, heads * width}, rng), test::random_array({heads, width}, rng),
          test::random_array({heads, width}, rng)};
}

gat::GatLayerParams bind(Tape& t, const RawLayer& l) {
  return {t.constant(l.weight), t.constant(l.src), t.constant(l.dst)};
}

double leaky(double x) { return x > 0 ? x : 0.2 * x; }
double elu(double x) { return x > 0 ? x : std::expm1(x); }

// Per-node loop over one sample: h is d x f_in.
Array naive_layer(const Array& h, const Array& mask, const RawLayer& l, Array* alpha_out = nullptr) {
  const std::size_t d = h.extent(0);
  const std::size_t f_in = h.extent(1);
  const std::size_t heads = l.src.extent(0);
  const std::size_t w = l.src.extent(1);
  Array wh({d, heads * w});
  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t c = 0; c < heads * w; ++c) {
      for (std::size_t i = 0; i < f_in; ++i) wh.at(u, c) += h.at(u, i) * l.weight.at(i, c);
    }
  }
  Array out({d, heads * w});
  if (alpha_out != nullptr) *alpha_out = Array({heads, d, d});
  for (std::size_t k = 0; k < heads; ++k) {
    for (std::size_t u = 0; u < d; ++u) {
      std::vector<double> logits(d, -std::numeric_limits<double>::infinity());
      for (std::size_t v = 0; v < d; ++v) {
        if (mask.at(u, v) == 0.0) continue;
        double s = 0.0;
        for (std::size_t f = 0; f < w; ++f) s += l.src.at(k, f) * wh.at(u, k * w + f) + l.dst.at(k, f) * wh.at(v, k * w + f);
        logits[v] = leaky(s);
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& e : logits) {
        e = std::exp(e - mx);
        z += e;
      }
      for (std::size_t f = 0; f < w; ++f) {
        double acc = 0.0;
        for (std::size_t v = 0; v < d; ++v) acc += logits[v] / z * wh.at(v, k * w + f);
        out.at(u, k * w + f) = elu(acc);
      }
      if (alpha_out != nullptr) {
        for (std::size_t v = 0; v < d; ++v) alpha_out->data()[(k * d + u) * d + v] = logits[v] / z;
      }
    }
  }
  return out;
}

rri::EdgeMatrix edges_of(Array adj) { return {std::move(adj), 0.0, "test"}; }

Array batch_of(const Array& h) { return h.reshaped({1, h.extent(0), h.extent(1)}); }

}  // namespace

TEST(Attention, SelfLoopOnlyGivesOne) {
  std::mt19937_64 rng(1);
  Tape t;
  const RawLayer l = random_layer(2, 1, 3, rng);
  Var h = t.constant(test::random_array({1, 3, 2}, rng));
  const Array a = gat::attention_coefficients(h, edges_of(Array::identity(3)), bind(t, l)).value();
  for (std::size_t u = 0; u < 3; ++u) EXPECT_DOUBLE_EQ(a[u * 3 + u], 1.0);
}

TEST(Attention, IdenticalNeighborsSplitEvenly) {
  std::mt19937_64 rng(2);
  Tape t;
  const RawLayer l = random_layer(2, 1, 3, rng);
  Array feats({1, 3, 2});
  for (std::size_t i = 0; i < 6; ++i) feats[i] = 0.7;
  Array adj = Array::matrix({{1, 1, 0}, {1, 1, 0}, {0, 0, 1}});
  const Array a = gat::attention_coefficients(t.constant(feats), edges_of(adj), bind(t, l)).value();
  EXPECT_NEAR(a[0], 0.5, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
}

TEST(Attention, DenseMaskedSoftmaxOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Array mask = test::random_mask(3, rng);
    const RawLayer l = random_layer(2, 2, 4, rng);
    const Array h = test::random_array({3, 2}, rng);
    Tape t;
    const Array a = gat::attention_coefficients(t.constant(batch_of(h)), edges_of(mask), bind(t, l)).value();
    // Dense form: all d x d logits, -inf off the mask, ordinary softmax per row.
    Array wh({3, 8});
    for (std::size_t u = 0; u < 3; ++u) {
      for (std::size_t c = 0; c < 8; ++c) wh.at(u, c) = h.at(u, 0) * l.weight.at(0, c) + h.at(u, 1) * l.weight.at(1, c);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t u = 0; u < 3; ++u) {
        double dense[3];
        for (std::size_t v = 0; v < 3; ++v) {
          double s = 0.0;
          for (std::size_t f = 0; f < 4; ++f) s += l.src.at(k, f) * wh.at(u, 4 * k + f) + l.dst.at(k, f) * wh.at(v, 4 * k + f);
          dense[v] = mask.at(u, v) != 0.0 ? leaky(s) : -std::numeric_limits<double>::infinity();
        }
        const double mx = std::max({dense[0], dense[1], dense[2]});
        double z = 0.0;
        for (double& e : dense) z += (e = std::exp(e - mx));
        double row = 0.0;
        for (std::size_t v = 0; v < 3; ++v) {
          const double got = a[(k * 3 + u) * 3 + v];
          EXPECT_NEAR(got, dense[v] / z, 1e-14);
          if (mask.at(u, v) == 0.0) {
            EXPECT_EQ(got, 0.0);
          }
          row += got;
        }
        EXPECT_NEAR(row, 1.0, 1e-12);
      }
    }
  }
}

TEST(GatLayer, UniformAttentionAveragesNeighbors) {
  std::mt19937_64 rng(4);
  RawLayer l = random_layer(2, 1, 3, rng);
  l.src.fill(0.0);
  l.dst.fill(0.0);
  const Array h = test::random_array({4, 2}, rng);
  const Array mask = Array::matrix({{1, 1, 1, 0}, {1, 1, 0, 0}, {1, 0, 1, 1}, {0, 0, 1, 1}});
  Tape t;
  const Array out = gat::gat_layer(t.constant(batch_of(h)), edges_of(mask), bind(t, l)).value();
  for (std::size_t u = 0; u < 4; ++u) {
    const double deg = mask.at(u, 0) + mask.at(u, 1) + mask.at(u, 2) + mask.at(u, 3);
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t v = 0; v < 4; ++v) {
        if (mask.at(u, v) != 0.0) mean += (h.at(v, 0) * l.weight.at(0, c) + h.at(v, 1) * l.weight.at(1, c)) / deg;
      }
      EXPECT_NEAR(out[u * 3 + c], elu(mean), 1e-14);
    }
  }
}

TEST(GatLayer, IsolatedNodeWithIdentityWeights) {
  Tape t;
  const Array h = Array({1, 1, 2}, {-0.5, 1.5});
  gat::GatLayerParams p{t.constant(Array::identity(2)), t.constant(Array({1, 2})), t.constant(Array({1, 2}))};
  const Array out = gat::gat_layer(t.constant(h), edges_of(Array::identity(1)), p).value();
  EXPECT_NEAR(out[0], std::expm1(-0.5), 1e-15);
  EXPECT_DOUBLE_EQ(out[1], 1.5);
}

TEST(GatLayer, MatchesNaiveLoop) {
  std::mt19937_64 rng(5);
  const Array mask = test::random_mask(4, rng);
  const RawLayer l = random_layer(3, 2, 5, rng);
  const Array h = test::random_array({2, 4, 3}, rng);
  Tape t;
  const Array out = gat::gat_layer(t.constant(h), edges_of(mask), bind(t, l)).value();
  for (std::size_t b = 0; b < 2; ++b) {
    Array hb({4, 3});
    std::copy_n(h.data().begin() + b * 12, 12, hb.data().begin());
    const Array expect = naive_layer(hb, mask, l);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(out[b * 40 + i], expect[i], 1e-12);
  }
}

TEST(GatLayer, MaskingSoundness) {
  // Node 3 is not adjacent to node 0, so its features cannot reach node 0 in one layer.
  std::mt19937_64 rng(6);
  const Array mask = Array::matrix({{1, 1, 0, 0}, {1, 1, 1, 0}, {0, 1, 1, 1}, {0, 0, 1, 1}});
  const RawLayer l = random_layer(2, 2, 3, rng);
  Array h = test::random_array({1, 4, 2}, rng);
  Tape t;
  const Array before = gat::gat_layer(t.constant(h), edges_of(mask), bind(t, l)).value();
  h.at(0, 3, 0) += 5.0;
  h.at(0, 3, 1) -= 2.0;
  const Array after = gat::gat_layer(t.constant(h), edges_of(mask), bind(t, l)).value();
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(before[c], after[c]);
  EXPECT_NE(before[2 * 6], after[2 * 6]);
}

TEST(GatLayer, GradientCheckOnRandomGraphs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const rri::EdgeMatrix e = edges_of(test::random_mask(5, rng));
    auto f = [&](Tape&, const std::vector<Var>& x) {
      return test::probe(gat::gat_layer(x[0], e, {x[1], x[2], x[3]}));
    };
    const RawLayer l = random_layer(2, 2, 3, rng);
    EXPECT_LT(grad_check(f, {test::random_array({2, 5, 2}, rng), l.weight, l.src, l.dst}), 1e-4);
  }
}

TEST(GatLayer, FourNodeGradientCheck) {
  std::mt19937_64 rng(8);
  const rri::EdgeMatrix e = edges_of(Array::matrix({{1, 1, 0, 1}, {1, 1, 1, 0}, {0, 1, 1, 0}, {1, 0, 0, 1}}));
  auto f = [&](Tape&, const std::vector<Var>& x) { return test::probe(gat::gat_layer(x[0], e, {x[1], x[2], x[3]})); };
  const RawLayer l = random_layer(1, 2, 4, rng);
  EXPECT_LT(grad_check(f, {test::random_array({1, 4, 1}, rng), l.weight, l.src, l.dst}), 1e-4);
}

TEST(GatLayer, ShapeMismatch) {
  std::mt19937_64 rng(9);
  Tape t;
  const RawLayer l = random_layer(3, 2, 4, rng);
  Var h = t.constant(test::random_array({1, 4, 2}, rng));
  EXPECT_THROW(gat::gat_layer(h, edges_of(Array::identity(4)), bind(t, l)), DimensionError);
  Var h3 = t.constant(test::random_array({1, 4, 3}, rng));
  EXPECT_THROW(gat::gat_layer(h3, edges_of(Array::identity(5)), bind(t, l)), DimensionError);
}

TEST(Readout, Examples) {
  Tape t;
  EXPECT_EQ(gat::readout(t.constant(Array({1, 2, 1}, {0, 2}))).value(), Array({1, 1}, {1.0}));
  EXPECT_EQ(gat::readout(t.constant(Array({1, 3, 2}, {4, 5, 4, 5, 4, 5}))).value(), Array({1, 2}, {4, 5}));
}

TEST(Readout, MatchesDirectMean) {
  std::mt19937_64 rng(10);
  const Array x = test::random_array({1, 5, 3}, rng);
  Tape t;
  const Array r = gat::readout(t.constant(x)).value();
  for (std::size_t f = 0; f < 3; ++f) {
    double s = 0.0;
    for (std::size_t u = 0; u < 5; ++u) s += x.at(0, u, f);
    EXPECT_NEAR(r[f], s / 5.0, 1e-15);
  }
}

namespace {

std::vector<RawLayer> three_layers(std::size_t heads, std::size_t width, std::mt19937_64& rng) {
  return {random_layer(1, heads, width, rng), random_layer(heads * width, heads, width, rng),
          random_layer(heads * width, heads, width, rng)};
}

Array encode(const Array& h, const rri::EdgeMatrix& e, const std::vector<RawLayer>& layers, std::size_t heads,
             std::size_t width) {
  Tape t;
  std::vector<gat::GatLayerParams> p;
  for (const auto& l : layers) p.push_back(bind(t, l));
  return gat::multilevel_encode(t.constant(h), e, {3, heads, width}, p).value();
}

}  // namespace

TEST(MultilevelEncode, HandTraceOfStackedLayers) {
  std::mt19937_64 rng(11);
  const Array mask = Array::matrix({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
  const auto layers = three_layers(2, 2, rng);
  const Array h = test::random_array({3, 1}, rng);
  const Array l1 = naive_layer(h, mask, layers[0]);
  const Array l2 = naive_layer(l1, mask, layers[1]);
  const Array l3 = naive_layer(l2, mask, layers[2]);
  const Array f = encode(batch_of(h), edges_of(mask), layers, 2, 2);
  ASSERT_EQ(f.shape(), (Shape{1, 12}));
  const Array* levels[] = {&l1, &l2, &l3};
  for (std::size_t lv = 0; lv < 3; ++lv) {
    for (std::size_t c = 0; c < 4; ++c) {
      const double mean = (levels[lv]->at(0, c) + levels[lv]->at(1, c) + levels[lv]->at(2, c)) / 3.0;
      EXPECT_NEAR(f[lv * 4 + c], mean, 1e-12);
    }
  }
}

TEST(MultilevelEncode, SharedFeatureGivesRepeatedTransform) {
  std::mt19937_64 rng(12);
  const auto layers = three_layers(1, 3, rng);
  Array h({1, 4, 1}, 0.4);
  const Array mask = test::random_mask(4, rng);
  const Array f = encode(h, edges_of(mask), layers, 1, 3);
  // Every node carries the same vector at every level, so each readout is that
  // vector and nodes agree regardless of topology.
  const Array single = encode(Array({1, 1, 1}, 0.4), edges_of(Array::identity(1)), layers, 1, 3);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(f[i], single[i], 1e-14);
}

TEST(MultilevelEncode, PermutationInvariant) {
  std::mt19937_64 rng(13);
  const std::size_t d = 6;
  const auto layers = three_layers(2, 3, rng);
  const Array mask = test::random_mask(d, rng);
  const Array h = test::random_array({2, d, 1}, rng);
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Array pmask({d, d});
  Array ph({2, d, 1});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) pmask.at(i, j) = mask.at(perm[i], perm[j]);
    for (std::size_t b = 0; b < 2; ++b) ph.at(b, i, 0) = h.at(b, perm[i], 0);
  }
  const Array a = encode(h, edges_of(mask), layers, 2, 3);
  const Array b = encode(ph, edges_of(pmask), layers, 2, 3);
  EXPECT_LT(max_abs_diff(a, b), 1e-10);
}

TEST(MultilevelEncode, RequiresThreeLevels) {
  std::mt19937_64 rng(14);
  const auto layers = three_layers(1, 2, rng);
  Tape t;
  std::vector<gat::GatLayerParams> p;
  for (const auto& l : layers) p.push_back(bind(t, l));
  Var h = t.constant(Array({1, 2, 1}, 1.0));
  EXPECT_THROW(gat::multilevel_encode(h, edges_of(Array::identity(2)), {2, 1, 2}, p), ConfigError);
  EXPECT_THROW(gat::multilevel_encode(h, edges_of(Array::identity(2)), {3, 1, 2}, std::span(p).first(2)),
               ConfigError);
}

TEST(MultilevelEncode, EncodeGraphUsesSampleFeatures) {
  std::mt19937_64 rng(15);
  const auto layers = three_layers(2, 2, rng);
  auto e = std::make_shared<const rri::EdgeMatrix>(edges_of(test::random_mask(5, rng)));
  const Array nodes = test::random_array({5, 1}, rng);
  rri::SampleGraph g{e, nodes, "s0", rri::View::kRadiomic, "m"};
  Tape t;
  std::vector<gat::GatLayerParams> p;
  for (const auto& l : layers) p.push_back(bind(t, l));
  EXPECT_LT(max_abs_diff(gat::encode_graph(t, g, {3, 2, 2}, p).value(), encode(batch_of(nodes), *e, layers, 2, 2)),
            1e-15);
}
