#pragma once

#include <functional>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/tape.hpp"

namespace tmm {

// A scalar function of some parameter arrays, written against the tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares reverse-mode gradients of `f` at `point` against central
// differences with step `eps`. Returns
//   max over coordinates of |analytic - numeric| / max(1, |analytic|).
// Throws NumericError if any evaluation is non-finite.
double grad_check(const ScalarFn& f, const std::vector<Array>& point, double eps = 1e-5);

// Reverse-mode gradient of `f` at `point`, one array per input.
std::vector<Array> gradient(const ScalarFn& f, const std::vector<Array>& point);

// f evaluated on a fresh tape with every input held constant.
double evaluate(const ScalarFn& f, const std::vector<Array>& point);

}  // namespace tmm
