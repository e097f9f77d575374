#include <cmath>

#include "support.hpp"

namespace tmm::test {
namespace {

using Points = std::vector<Array>;

std::function<Points(std::mt19937_64&)> shapes(std::vector<Shape> s, double lo = -1.0, double hi = 1.0) {
  return [s, lo, hi](std::mt19937_64& rng) {
    Points p;
    for (const Shape& shape : s) p.push_back(random_array(shape, rng, lo, hi));
    return p;
  };
}

ScalarFn unary(Var (*op)(Var)) {
  return [op](Tape&, const std::vector<Var>& x) { return probe(op(x[0])); };
}

ScalarFn binary(Var (*op)(Var, Var)) {
  return [op](Tape&, const std::vector<Var>& x) { return probe(op(x[0], x[1])); };
}

const std::vector<int> kLabels = {0, 2, 1, 2};

}  // namespace

std::vector<GradCase> primitive_grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"add", binary(ops::add), shapes({{3, 4}, {3, 4}})});
  cases.push_back({"sub", binary(ops::sub), shapes({{3, 4}, {3, 4}})});
  cases.push_back({"mul", binary(ops::mul), shapes({{3, 4}, {3, 4}})});
  cases.push_back({"scale", [](Tape&, const std::vector<Var>& x) { return probe(ops::scale(x[0], -1.7)); },
                   shapes({{5}})});
  cases.push_back({"affine", [](Tape&, const std::vector<Var>& x) { return probe(ops::affine(x[0], 0.3, 2.0)); },
                   shapes({{2, 3}})});
  cases.push_back({"reciprocal", unary(ops::reciprocal), shapes({{4, 2}}, 0.5, 2.0)});
  // Points stay clear of the clamp bounds; the derivative is undefined there.
  cases.push_back({"clamp",
                   [](Tape&, const std::vector<Var>& x) { return probe(ops::clamp(x[0], -0.5, 0.5)); },
                   [](std::mt19937_64& rng) {
                     Array a = random_array({3, 3}, rng, -0.45, 0.45);
                     a[0] = 0.8;
                     a[1] = -0.9;
                     return Points{a};
                   }});
  cases.push_back({"leaky_relu", [](Tape&, const std::vector<Var>& x) { return probe(ops::leaky_relu(x[0])); },
                   shapes({{4, 4}})});
  cases.push_back({"elu", unary(ops::elu), shapes({{4, 4}})});
  cases.push_back({"sigmoid", unary(ops::sigmoid), shapes({{4, 4}}, -4.0, 4.0)});
  cases.push_back({"add_bias", binary(ops::add_bias), shapes({{2, 3, 4}, {4}})});
  cases.push_back({"row_scale", binary(ops::row_scale), shapes({{3, 5}, {3, 1}})});
  cases.push_back({"reshape",
                   [](Tape&, const std::vector<Var>& x) { return probe(ops::reshape(x[0], {3, 2, 2})); },
                   shapes({{4, 3}})});
  cases.push_back({"concat",
                   [](Tape&, const std::vector<Var>& x) { return probe(ops::concat({x[0], x[1], x[0]}, 1)); },
                   shapes({{2, 3}, {2, 1}})});
  cases.push_back({"slice", [](Tape&, const std::vector<Var>& x) { return probe(ops::slice(x[0], 1, 1, 3)); },
                   shapes({{2, 4, 2}})});
  cases.push_back({"split",
                   [](Tape&, const std::vector<Var>& x) {
                     auto parts = ops::split(x[0], 0, {1, 3});
                     return ops::add(probe(parts[0], 5), probe(parts[1], 6));
                   },
                   shapes({{4, 2}})});
  cases.push_back({"transpose", unary(ops::transpose), shapes({{3, 4}})});
  cases.push_back({"transpose_last2", unary(ops::transpose_last2), shapes({{2, 3, 4}})});
  cases.push_back({"matmul", binary(ops::matmul), shapes({{3, 4}, {4, 2}})});
  cases.push_back({"batched_matmul", binary(ops::batched_matmul), shapes({{2, 3, 4}, {2, 4, 2}})});
  cases.push_back({"sum", [](Tape&, const std::vector<Var>& x) { return ops::sum(ops::mul(x[0], x[0])); },
                   shapes({{3, 2}})});
  cases.push_back({"mean", [](Tape&, const std::vector<Var>& x) { return ops::mean(ops::mul(x[0], x[0])); },
                   shapes({{3, 2}})});
  cases.push_back({"mean_axis", [](Tape&, const std::vector<Var>& x) { return probe(ops::mean_axis(x[0], 1)); },
                   shapes({{2, 3, 4}})});
  cases.push_back({"softmax", [](Tape&, const std::vector<Var>& x) { return probe(ops::softmax(x[0], 1)); },
                   shapes({{3, 4}}, -2.0, 2.0)});
  cases.push_back({"softmax_axis0",
                   [](Tape&, const std::vector<Var>& x) { return probe(ops::softmax(x[0], 0)); },
                   shapes({{3, 4}}, -2.0, 2.0)});
  cases.push_back({"cross_entropy",
                   [](Tape&, const std::vector<Var>& x) { return ops::cross_entropy(x[0], kLabels); },
                   shapes({{4, 3}}, -3.0, 3.0)});
  cases.push_back({"mse", [](Tape&, const std::vector<Var>& x) { return ops::mse(x[0], x[1]); },
                   shapes({{4, 1}, {4, 1}})});
  cases.push_back({"gather_labels",
                   [](Tape&, const std::vector<Var>& x) { return probe(ops::gather_labels(x[0], kLabels)); },
                   shapes({{4, 3}})});
  cases.push_back({"max_excluding_label",
                   [](Tape&, const std::vector<Var>& x) {
                     return probe(ops::max_excluding_label(ops::softmax(x[0], 1), kLabels));
                   },
                   shapes({{4, 3}}, -3.0, 3.0)});
  cases.push_back({"head_scores", binary(ops::head_scores), shapes({{2, 5, 6}, {2, 3}})});
  cases.push_back({"masked_attention",
                   [](Tape&, const std::vector<Var>& x) {
                     std::mt19937_64 rng(4);
                     return probe(ops::masked_attention(x[0], x[1], random_mask(5, rng)));
                   },
                   shapes({{2, 5, 2}, {2, 5, 2}})});
  cases.push_back({"head_aggregate",
                   [](Tape&, const std::vector<Var>& x) {
                     return probe(ops::head_aggregate(ops::softmax(x[0], 3), x[1]));
                   },
                   shapes({{2, 2, 4, 4}, {2, 4, 6}})});
  cases.push_back({"graph_attention",
                   [](Tape&, const std::vector<Var>& x) {
                     std::mt19937_64 rng(5);
                     return probe(ops::graph_attention(x[0], x[1], x[2], random_mask(5, rng)));
                   },
                   shapes({{2, 5, 6}, {2, 5, 2}, {2, 5, 2}})});
  return cases;
}

}  // namespace tmm::test
