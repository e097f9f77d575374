#include "tmm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tmm/errors.hpp"

namespace tmm {

double evaluate(const ScalarFn& f, const std::vector<Array>& point) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (const Array& p : point) inputs.push_back(tape.constant(p));
  const double value = f(tape, inputs).value().item();
  if (!std::isfinite(value)) throw NumericError("grad_check: non-finite function value");
  return value;
}

std::vector<Array> gradient(const ScalarFn& f, const std::vector<Array>& point) {
  Tape tape;
  std::vector<Var> inputs;
  for (std::size_t i = 0; i < point.size(); ++i) {
    inputs.push_back(tape.parameter("p" + std::to_string(i), point[i]));
  }
  Gradients grads = tape.backward(f(tape, inputs));
  std::vector<Array> out;
  for (std::size_t i = 0; i < point.size(); ++i) out.push_back(grads.at("p" + std::to_string(i)));
  return out;
}

double grad_check(const ScalarFn& f, const std::vector<Array>& point, double eps) {
  const std::vector<Array> analytic = gradient(f, point);
  std::vector<Array> probe = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t j = 0; j < probe[i].size(); ++j) {
      const double saved = probe[i][j];
      probe[i][j] = saved + eps;
      const double up = evaluate(f, probe);
      probe[i][j] = saved - eps;
      const double down = evaluate(f, probe);
      probe[i][j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i][j];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace tmm
