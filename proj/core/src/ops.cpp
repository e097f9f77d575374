#include "tmm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kernels.hpp"
#include "tmm/errors.hpp"

namespace tmm::ops {
namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

Tape& shared_tape(Var a, Var b) {
  if (a.tape() != b.tape() || !a.valid()) throw UsageError("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

// Splits a shape around `axis` into (outer, axis extent, inner) for strided loops.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename F>
Array map_values(const Array& a, F f) {
  Array out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void accumulate(Tape& t, Var target, const Array& g) {
  if (!t.requires_grad(target)) return;
  Array& dst = t.grad(target);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void check_labels(const char* op, std::span<const int> labels, std::size_t rows,
                  std::size_t classes) {
  if (labels.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "leaky-relu") return Activation::kLeakyRelu;
  if (name == "elu") return Activation::kElu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

Var add(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  require_same_shape("add", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.record("add", std::move(out), {a, b}, [a, b](Tape& tp, const Array&, const Array& g) {
    accumulate(tp, a, g);
    accumulate(tp, b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  require_same_shape("sub", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record("sub", std::move(out), {a, b}, [a, b](Tape& tp, const Array&, const Array& g) {
    accumulate(tp, a, g);
    if (tp.requires_grad(b)) {
      Array& db = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  require_same_shape("mul", a, b);
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record("mul", std::move(out), {a, b}, [a, b](Tape& tp, const Array&, const Array& g) {
    if (tp.requires_grad(a)) {
      Array& da = tp.grad(a);
      const Array& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      Array& db = tp.grad(b);
      const Array& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double factor, double shift) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [=](double x) { return factor * x + shift; });
  return t.record("affine", std::move(out), {a}, [a, factor](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += factor * g[i];
  });
}

Var reciprocal(Var a) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [](double x) { return 1.0 / x; });
  return t.record("reciprocal", std::move(out), {a}, [a](Tape& tp, const Array& y, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i] * y[i] * y[i];
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [=](double x) { return std::clamp(x, lo, hi); });
  return t.record("clamp", std::move(out), {a}, [a, lo, hi](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    const Array& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) da[i] += g[i];
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [=](double x) { return x > 0.0 ? x : slope * x; });
  return t.record("leaky_relu", std::move(out), {a}, [a, slope](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    const Array& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += x[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var elu(Var a) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [](double x) { return x > 0.0 ? x : std::expm1(x); });
  return t.record("elu", std::move(out), {a}, [a](Tape& tp, const Array& y, const Array& g) {
    Array& da = tp.grad(a);
    const Array& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += x[i] > 0.0 ? g[i] : g[i] * (y[i] + 1.0);
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Array out = map_values(a.value(), [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return t.record("sigmoid", std::move(out), {a}, [a](Tape& tp, const Array& y, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var activation(Var a, Activation kind) {
  switch (kind) {
    case Activation::kLeakyRelu:
      return leaky_relu(a);
    case Activation::kElu:
      return elu(a);
    case Activation::kSigmoid:
      return sigmoid(a);
  }
  throw ConfigError("unknown activation kind");
}

Var add_bias(Var a, Var bias) {
  Tape& t = shared_tape(a, bias);
  const std::size_t f = a.shape().empty() ? 1 : a.shape().back();
  if (bias.value().size() != f) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  Array out = a.value();
  const Array& bv = bias.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % f];
  return t.record("add_bias", std::move(out), {a, bias},
                  [a, bias, f](Tape& tp, const Array&, const Array& g) {
                    accumulate(tp, a, g);
                    if (tp.requires_grad(bias)) {
                      Array& db = tp.grad(bias);
                      for (std::size_t i = 0; i < g.size(); ++i) db[i % f] += g[i];
                    }
                  });
}

Var row_scale(Var a, Var s) {
  Tape& t = shared_tape(a, s);
  if (a.value().rank() == 0 || s.value().size() != a.shape()[0]) {
    throw DimensionError("row_scale: scale " + shape_string(s.shape()) + " does not match rows of " +
                         shape_string(a.shape()));
  }
  const std::size_t rows = a.shape()[0];
  const std::size_t width = a.value().size() / rows;
  Array out = a.value();
  const Array& sv = s.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] *= sv[r];
  }
  return t.record("row_scale", std::move(out), {a, s},
                  [a, s, rows, width](Tape& tp, const Array&, const Array& g) {
                    if (tp.requires_grad(a)) {
                      Array& da = tp.grad(a);
                      const Array& sv = s.value();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < width; ++j) da[r * width + j] += g[r * width + j] * sv[r];
                      }
                    }
                    if (tp.requires_grad(s)) {
                      Array& ds = tp.grad(s);
                      const Array& av = a.value();
                      for (std::size_t r = 0; r < rows; ++r) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < width; ++j) acc += g[r * width + j] * av[r * width + j];
                        ds[r] += acc;
                      }
                    }
                  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Array out = a.value().reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {a}, [a](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  Tape& t = tape_of(parts.front());
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (Var p : parts) {
    if (p.tape() != &t) throw UsageError("concat: parts live on different tapes");
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: inconsistent extents " + shape_string(first) + " vs " + shape_string(s));
    }
    out_shape[axis] += s[axis];
  }
  const AxisView ov = axis_view(out_shape, axis);
  Array out(out_shape);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[axis] * ov.inner;
    const Array& pv = p.value();
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * ov.extent * ov.inner + offset));
    }
    offset += chunk;
  }
  return t.record("concat", std::move(out), parts,
                  [parts, offsets, ov, axis](Tape& tp, const Array&, const Array& g) {
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                      Var p = parts[i];
                      if (!tp.requires_grad(p)) continue;
                      Array& dp = tp.grad(p);
                      const std::size_t chunk = p.shape()[axis] * ov.inner;
                      for (std::size_t o = 0; o < ov.outer; ++o) {
                        const std::size_t src = o * ov.extent * ov.inner + offsets[i];
                        for (std::size_t j = 0; j < chunk; ++j) dp[o * chunk + j] += g[src + j];
                      }
                    }
                  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const AxisView v = axis_view(a.shape(), axis);
  if (begin >= end || end > v.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * v.inner;
  Array out(out_shape);
  const Array& av = a.value();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>((o * v.extent + begin) * v.inner), chunk,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return t.record("slice", std::move(out), {a}, [a, v, begin, chunk](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t o = 0; o < v.outer; ++o) {
      const std::size_t dst = (o * v.extent + begin) * v.inner;
      for (std::size_t j = 0; j < chunk; ++j) da[dst + j] += g[o * chunk + j];
    }
  });
}

std::vector<Var> split(Var a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  const AxisView v = axis_view(a.shape(), axis);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != v.extent) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis extent is " +
                         std::to_string(v.extent));
  }
  std::vector<Var> out;
  std::size_t begin = 0;
  for (std::size_t s : sizes) {
    out.push_back(slice(a, axis, begin, begin + s));
    begin += s;
  }
  return out;
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_rank("transpose", a, 2);
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  Array out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  }
  return t.record("transpose", std::move(out), {a}, [a, r, c](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) da.at(i, j) += g.at(j, i);
    }
  });
}

Var transpose_last2(Var a) {
  Tape& t = tape_of(a);
  require_rank("transpose_last2", a, 3);
  const std::size_t b = a.shape()[0];
  const std::size_t r = a.shape()[1];
  const std::size_t c = a.shape()[2];
  Array out(Shape{b, c, r});
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out.at(n, j, i) = a.value().at(n, i, j);
    }
  }
  return t.record("transpose_last2", std::move(out), {a},
                  [a, b, r, c](Tape& tp, const Array&, const Array& g) {
                    Array& da = tp.grad(a);
                    for (std::size_t n = 0; n < b; ++n) {
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) da.at(n, i, j) += g.at(n, j, i);
                      }
                    }
                  });
}

Var matmul(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t p = a.shape()[0];
  const std::size_t q = a.shape()[1];
  const std::size_t r = b.shape()[1];
  Array out(Shape{p, r});
  kernels::gemm(false, false, p, r, q, a.value().data().data(), q, b.value().data().data(), r,
                out.data().data(), r, false);
  return t.record("matmul", std::move(out), {a, b}, [a, b, p, q, r](Tape& tp, const Array&, const Array& g) {
    if (tp.requires_grad(a)) {
      // dA = G * B^T
      kernels::gemm(false, true, p, q, r, g.data().data(), r, b.value().data().data(), r,
                    tp.grad(a).data().data(), q, true);
    }
    if (tp.requires_grad(b)) {
      // dB = A^T * G
      kernels::gemm(true, false, q, r, p, a.value().data().data(), q, g.data().data(), r,
                    tp.grad(b).data().data(), r, true);
    }
  });
}

Var batched_matmul(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  if (a.value().rank() != 3 || b.value().rank() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1]) {
    throw DimensionError("batched_matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t n = a.shape()[0];
  const std::size_t p = a.shape()[1];
  const std::size_t q = a.shape()[2];
  const std::size_t r = b.shape()[2];
  Array out(Shape{n, p, r});
  for (std::size_t i = 0; i < n; ++i) {
    kernels::gemm(false, false, p, r, q, a.value().data().data() + i * p * q, q,
                  b.value().data().data() + i * q * r, r, out.data().data() + i * p * r, r, false);
  }
  return t.record("batched_matmul", std::move(out), {a, b},
                  [a, b, n, p, q, r](Tape& tp, const Array&, const Array& g) {
                    const bool ga = tp.requires_grad(a);
                    const bool gb = tp.requires_grad(b);
                    for (std::size_t i = 0; i < n; ++i) {
                      if (ga) {
                        kernels::gemm(false, true, p, q, r, g.data().data() + i * p * r, r,
                                      b.value().data().data() + i * q * r, r,
                                      tp.grad(a).data().data() + i * p * q, q, true);
                      }
                      if (gb) {
                        kernels::gemm(true, false, q, r, p, a.value().data().data() + i * p * q, q,
                                      g.data().data() + i * p * r, r,
                                      tp.grad(b).data().data() + i * q * r, r, true);
                      }
                    }
                  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return t.record("sum", Array::scalar(acc), {a}, [a](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    const double s = g[0];
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += s;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_axis(Var a, std::size_t axis) {
  Tape& t = tape_of(a);
  const AxisView v = axis_view(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Array out(out_shape);
  const Array& av = a.value();
  const double inv = 1.0 / static_cast<double>(v.extent);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.extent; ++k) {
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += av[(o * v.extent + k) * v.inner + i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  return t.record("mean_axis", std::move(out), {a}, [a, v, inv](Tape& tp, const Array&, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.extent; ++k) {
        for (std::size_t i = 0; i < v.inner; ++i) da[(o * v.extent + k) * v.inner + i] += g[o * v.inner + i] * inv;
      }
    }
  });
}

Var softmax(Var a, std::size_t axis) {
  Tape& t = tape_of(a);
  const AxisView v = axis_view(a.shape(), axis);
  const Array& av = a.value();
  Array out(a.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < v.extent; ++k) mx = std::max(mx, av[base + k * v.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < v.extent; ++k) {
        const double e = std::exp(av[base + k * v.inner] - mx);
        out[base + k * v.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] /= total;
    }
  }
  return t.record("softmax", std::move(out), {a}, [a, v](Tape& tp, const Array& y, const Array& g) {
    Array& da = tp.grad(a);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.extent * v.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < v.extent; ++k) dot += y[base + k * v.inner] * g[base + k * v.inner];
        for (std::size_t k = 0; k < v.extent; ++k) {
          const std::size_t idx = base + k * v.inner;
          da[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits);
  require_rank("cross_entropy", logits, 2);
  const std::size_t n = logits.shape()[0];
  const std::size_t c = logits.shape()[1];
  check_labels("cross_entropy", labels, n, c);
  std::vector<int> y(labels.begin(), labels.end());
  const Array& z = logits.value();
  Array probs(Shape{n, c});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, z.at(i, k));
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += std::exp(z.at(i, k) - mx);
    const double log_norm = mx + std::log(total);
    for (std::size_t k = 0; k < c; ++k) probs.at(i, k) = std::exp(z.at(i, k) - log_norm);
    loss += log_norm - z.at(i, static_cast<std::size_t>(y[i]));
  }
  loss /= static_cast<double>(n);
  return t.record("cross_entropy", Array::scalar(loss), {logits},
                  [logits, y = std::move(y), probs = std::move(probs), n, c](Tape& tp, const Array&,
                                                                            const Array& g) {
                    Array& dz = tp.grad(logits);
                    const double s = g[0] / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      for (std::size_t k = 0; k < c; ++k) {
                        const double onehot = static_cast<int>(k) == y[i] ? 1.0 : 0.0;
                        dz.at(i, k) += s * (probs.at(i, k) - onehot);
                      }
                    }
                  });
}

Var mse(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  require_same_shape("mse", a, b);
  const std::size_t n = a.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return t.record("mse", Array::scalar(acc / static_cast<double>(n)), {a, b},
                  [a, b, n](Tape& tp, const Array&, const Array& g) {
                    const double s = 2.0 * g[0] / static_cast<double>(n);
                    const bool ga = tp.requires_grad(a);
                    const bool gb = tp.requires_grad(b);
                    for (std::size_t i = 0; i < n; ++i) {
                      const double d = s * (a.value()[i] - b.value()[i]);
                      if (ga) tp.grad(a)[i] += d;
                      if (gb) tp.grad(b)[i] -= d;
                    }
                  });
}

Var gather_labels(Var probs, std::span<const int> labels) {
  Tape& t = tape_of(probs);
  require_rank("gather_labels", probs, 2);
  const std::size_t n = probs.shape()[0];
  const std::size_t c = probs.shape()[1];
  check_labels("gather_labels", labels, n, c);
  std::vector<std::size_t> picks(n);
  Array out(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    picks[i] = static_cast<std::size_t>(labels[i]);
    out[i] = probs.value().at(i, picks[i]);
  }
  return t.record("gather_labels", std::move(out), {probs},
                  [probs, picks = std::move(picks)](Tape& tp, const Array&, const Array& g) {
                    Array& dp = tp.grad(probs);
                    for (std::size_t i = 0; i < picks.size(); ++i) dp.at(i, picks[i]) += g[i];
                  });
}

Var max_excluding_label(Var probs, std::span<const int> labels) {
  Tape& t = tape_of(probs);
  require_rank("max_excluding_label", probs, 2);
  const std::size_t n = probs.shape()[0];
  const std::size_t c = probs.shape()[1];
  if (c < 2) throw DimensionError("max_excluding_label: needs at least 2 classes");
  check_labels("max_excluding_label", labels, n, c);
  std::vector<std::size_t> picks(n);
  Array out(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = c;
    for (std::size_t k = 0; k < c; ++k) {
      if (static_cast<int>(k) == labels[i]) continue;
      if (best == c || probs.value().at(i, k) > probs.value().at(i, best)) best = k;
    }
    picks[i] = best;
    out[i] = probs.value().at(i, best);
  }
  return t.record("max_excluding_label", std::move(out), {probs},
                  [probs, picks = std::move(picks)](Tape& tp, const Array&, const Array& g) {
                    Array& dp = tp.grad(probs);
                    for (std::size_t i = 0; i < picks.size(); ++i) dp.at(i, picks[i]) += g[i];
                  });
}

Var head_scores(Var wh, Var attn) {
  Tape& t = shared_tape(wh, attn);
  require_rank("head_scores", wh, 3);
  require_rank("head_scores", attn, 2);
  const std::size_t b = wh.shape()[0];
  const std::size_t d = wh.shape()[1];
  const std::size_t heads = attn.shape()[0];
  const std::size_t f = attn.shape()[1];
  if (wh.shape()[2] != heads * f) {
    throw DimensionError("head_scores: features " + shape_string(wh.shape()) +
                         " incompatible with attention vectors " + shape_string(attn.shape()));
  }
  Array out(Shape{b, d, heads});
  const double* w = wh.value().data().data();
  const double* av = attn.value().data().data();
  for (std::size_t row = 0; row < b * d; ++row) {
    for (std::size_t k = 0; k < heads; ++k) {
      const double* __restrict x = w + row * heads * f + k * f;
      const double* __restrict y = av + k * f;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < f; ++j) acc += x[j] * y[j];
      out[row * heads + k] = acc;
    }
  }
  return t.record("head_scores", std::move(out), {wh, attn},
                  [wh, attn, b, d, heads, f](Tape& tp, const Array&, const Array& g) {
                    const double* w = wh.value().data().data();
                    const double* av = attn.value().data().data();
                    if (tp.requires_grad(wh)) {
                      double* dw = tp.grad(wh).data().data();
                      for (std::size_t row = 0; row < b * d; ++row) {
                        for (std::size_t k = 0; k < heads; ++k) {
                          const double s = g[row * heads + k];
                          double* __restrict x = dw + row * heads * f + k * f;
                          const double* __restrict y = av + k * f;
#pragma omp simd
                          for (std::size_t j = 0; j < f; ++j) x[j] += s * y[j];
                        }
                      }
                    }
                    if (tp.requires_grad(attn)) {
                      double* da = tp.grad(attn).data().data();
                      for (std::size_t row = 0; row < b * d; ++row) {
                        for (std::size_t k = 0; k < heads; ++k) {
                          const double s = g[row * heads + k];
                          double* __restrict x = da + k * f;
                          const double* __restrict y = w + row * heads * f + k * f;
#pragma omp simd
                          for (std::size_t j = 0; j < f; ++j) x[j] += s * y[j];
                        }
                      }
                    }
                  });
}

Var masked_attention(Var src, Var dst, const Array& mask, double slope) {
  Tape& t = shared_tape(src, dst);
  require_rank("masked_attention", src, 3);
  require_same_shape("masked_attention", src, dst);
  const std::size_t b = src.shape()[0];
  const std::size_t d = src.shape()[1];
  const std::size_t heads = src.shape()[2];
  if (mask.rank() != 2 || mask.shape()[0] != d || mask.shape()[1] != d) {
    throw DimensionError("masked_attention: mask " + shape_string(mask.shape()) + " does not match " +
                         std::to_string(d) + " nodes");
  }
  // Neighbor lists; the graph is usually sparse.
  std::vector<std::vector<std::size_t>> nbrs(d);
  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t v = 0; v < d; ++v) {
      if (mask.at(u, v) != 0.0) nbrs[u].push_back(v);
    }
    if (nbrs[u].empty()) {
      throw DimensionError("masked_attention: node " + std::to_string(u) + " has no neighbors");
    }
  }
  Array out(Shape{b, heads, d, d});
  const Array& sv = src.value();
  const Array& dv = dst.value();
  std::vector<double> logits(d);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t k = 0; k < heads; ++k) {
      for (std::size_t u = 0; u < d; ++u) {
        const double su = sv[(n * d + u) * heads + k];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t idx = 0; idx < nbrs[u].size(); ++idx) {
          const double z = su + dv[(n * d + nbrs[u][idx]) * heads + k];
          logits[idx] = z > 0.0 ? z : slope * z;
          mx = std::max(mx, logits[idx]);
        }
        double total = 0.0;
        for (std::size_t idx = 0; idx < nbrs[u].size(); ++idx) {
          logits[idx] = std::exp(logits[idx] - mx);
          total += logits[idx];
        }
        double* row = out.data().data() + ((n * heads + k) * d + u) * d;
        for (std::size_t idx = 0; idx < nbrs[u].size(); ++idx) row[nbrs[u][idx]] = logits[idx] / total;
      }
    }
  }
  return t.record(
      "masked_attention", std::move(out), {src, dst},
      [src, dst, nbrs = std::move(nbrs), b, d, heads, slope](Tape& tp, const Array& alpha, const Array& g) {
        const Array& sv = src.value();
        const Array& dv = dst.value();
        const bool gs = tp.requires_grad(src);
        const bool gd = tp.requires_grad(dst);
        double* dsrc = gs ? tp.grad(src).data().data() : nullptr;
        double* ddst = gd ? tp.grad(dst).data().data() : nullptr;
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t k = 0; k < heads; ++k) {
            for (std::size_t u = 0; u < d; ++u) {
              const std::size_t base = ((n * heads + k) * d + u) * d;
              double dot = 0.0;
              for (std::size_t v : nbrs[u]) dot += alpha[base + v] * g[base + v];
              const double su = sv[(n * d + u) * heads + k];
              for (std::size_t v : nbrs[u]) {
                const double dl = alpha[base + v] * (g[base + v] - dot);
                const double z = su + dv[(n * d + v) * heads + k];
                const double dz = z > 0.0 ? dl : slope * dl;
                if (gs) dsrc[(n * d + u) * heads + k] += dz;
                if (gd) ddst[(n * d + v) * heads + k] += dz;
              }
            }
          }
        }
      });
}

Var head_aggregate(Var alpha, Var wh) {
  Tape& t = shared_tape(alpha, wh);
  require_rank("head_aggregate", alpha, 4);
  require_rank("head_aggregate", wh, 3);
  const std::size_t b = alpha.shape()[0];
  const std::size_t heads = alpha.shape()[1];
  const std::size_t d = alpha.shape()[2];
  if (alpha.shape()[3] != d || wh.shape()[0] != b || wh.shape()[1] != d || wh.shape()[2] % heads != 0) {
    throw DimensionError("head_aggregate: incompatible shapes " + shape_string(alpha.shape()) + " and " +
                         shape_string(wh.shape()));
  }
  const std::size_t width = wh.shape()[2];
  const std::size_t f = width / heads;
  Array out(Shape{b, d, width});
  const double* a = alpha.value().data().data();
  const double* w = wh.value().data().data();
  double* o = out.data().data();
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t k = 0; k < heads; ++k) {
      kernels::gemm(false, false, d, f, d, a + (n * heads + k) * d * d, d, w + n * d * width + k * f, width,
                    o + n * d * width + k * f, width, false);
    }
  }
  return t.record("head_aggregate", std::move(out), {alpha, wh},
                  [alpha, wh, b, heads, d, width, f](Tape& tp, const Array&, const Array& g) {
                    const double* a = alpha.value().data().data();
                    const double* w = wh.value().data().data();
                    const double* gp = g.data().data();
                    const bool ga = tp.requires_grad(alpha);
                    const bool gw = tp.requires_grad(wh);
                    double* da = ga ? tp.grad(alpha).data().data() : nullptr;
                    double* dw = gw ? tp.grad(wh).data().data() : nullptr;
                    for (std::size_t n = 0; n < b; ++n) {
                      for (std::size_t k = 0; k < heads; ++k) {
                        const std::size_t aoff = (n * heads + k) * d * d;
                        const std::size_t woff = n * d * width + k * f;
                        if (ga) {
                          // dAlpha = G_k * Wh_k^T
                          kernels::gemm(false, true, d, d, f, gp + woff, width, w + woff, width, da + aoff, d, true);
                        }
                        if (gw) {
                          // dWh_k = Alpha^T * G_k
                          kernels::gemm(true, false, d, f, d, a + aoff, d, gp + woff, width, dw + woff, width, true);
                        }
                      }
                    }
                  });
}

Var graph_attention(Var wh, Var src, Var dst, const Array& mask, double slope) {
  Tape& t = shared_tape(wh, src);
  shared_tape(src, dst);
  require_rank("graph_attention", wh, 3);
  require_rank("graph_attention", src, 3);
  require_same_shape("graph_attention", src, dst);
  const std::size_t b = src.shape()[0];
  const std::size_t d = src.shape()[1];
  const std::size_t heads = src.shape()[2];
  if (wh.shape()[0] != b || wh.shape()[1] != d || wh.shape()[2] % heads != 0) {
    throw DimensionError("graph_attention: features " + shape_string(wh.shape()) + " do not match scores " +
                         shape_string(src.shape()));
  }
  if (mask.rank() != 2 || mask.shape()[0] != d || mask.shape()[1] != d) {
    throw DimensionError("graph_attention: mask " + shape_string(mask.shape()) + " does not match " +
                         std::to_string(d) + " nodes");
  }
  const std::size_t width = wh.shape()[2];
  const std::size_t f = width / heads;
  // CSR adjacency.
  std::vector<std::size_t> row_start(d + 1, 0);
  std::vector<std::size_t> cols;
  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t v = 0; v < d; ++v) {
      if (mask.at(u, v) != 0.0) cols.push_back(v);
    }
    row_start[u + 1] = cols.size();
    if (row_start[u + 1] == row_start[u]) {
      throw DimensionError("graph_attention: node " + std::to_string(u) + " has no neighbors");
    }
  }
  const std::size_t nnz = cols.size();
  std::vector<double> alpha(b * heads * nnz);
  Array out(Shape{b, d, width});
  const double* sv = src.value().data().data();
  const double* dv = dst.value().data().data();
  const double* w = wh.value().data().data();
  double* o = out.data().data();
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t k = 0; k < heads; ++k) {
      double* a = alpha.data() + (n * heads + k) * nnz;
      for (std::size_t u = 0; u < d; ++u) {
        const double su = sv[(n * d + u) * heads + k];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t e = row_start[u]; e < row_start[u + 1]; ++e) {
          const double z = su + dv[(n * d + cols[e]) * heads + k];
          a[e] = z > 0.0 ? z : slope * z;
          mx = std::max(mx, a[e]);
        }
        double total = 0.0;
        for (std::size_t e = row_start[u]; e < row_start[u + 1]; ++e) {
          a[e] = std::exp(a[e] - mx);
          total += a[e];
        }
        double* __restrict orow = o + (n * d + u) * width + k * f;
        for (std::size_t e = row_start[u]; e < row_start[u + 1]; ++e) {
          a[e] /= total;
          const double ae = a[e];
          const double* __restrict wrow = w + (n * d + cols[e]) * width + k * f;
#pragma omp simd
          for (std::size_t j = 0; j < f; ++j) orow[j] += ae * wrow[j];
        }
      }
    }
  }
  return t.record(
      "graph_attention", std::move(out), {wh, src, dst},
      [wh, src, dst, row_start = std::move(row_start), cols = std::move(cols), alpha = std::move(alpha), b, d,
       heads, width, f, nnz, slope](Tape& tp, const Array&, const Array& g) {
        const double* sv = src.value().data().data();
        const double* dv = dst.value().data().data();
        const double* w = wh.value().data().data();
        const double* gp = g.data().data();
        double* dw = tp.requires_grad(wh) ? tp.grad(wh).data().data() : nullptr;
        double* dsrc = tp.requires_grad(src) ? tp.grad(src).data().data() : nullptr;
        double* ddst = tp.requires_grad(dst) ? tp.grad(dst).data().data() : nullptr;
        std::vector<double> dalpha(d);
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t k = 0; k < heads; ++k) {
            const double* a = alpha.data() + (n * heads + k) * nnz;
            for (std::size_t u = 0; u < d; ++u) {
              const double* __restrict grow = gp + (n * d + u) * width + k * f;
              double dot = 0.0;
              for (std::size_t e = row_start[u]; e < row_start[u + 1]; ++e) {
                const std::size_t v = cols[e];
                const double* __restrict wrow = w + (n * d + v) * width + k * f;
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (std::size_t j = 0; j < f; ++j) acc += grow[j] * wrow[j];
                dalpha[e - row_start[u]] = acc;
                dot += a[e] * acc;
                if (dw != nullptr) {
                  const double ae = a[e];
                  double* __restrict dwrow = dw + (n * d + v) * width + k * f;
#pragma omp simd
                  for (std::size_t j = 0; j < f; ++j) dwrow[j] += ae * grow[j];
                }
              }
              if (dsrc == nullptr && ddst == nullptr) continue;
              const double su = sv[(n * d + u) * heads + k];
              for (std::size_t e = row_start[u]; e < row_start[u + 1]; ++e) {
                const std::size_t v = cols[e];
                const double dl = a[e] * (dalpha[e - row_start[u]] - dot);
                const double z = su + dv[(n * d + v) * heads + k];
                const double dz = z > 0.0 ? dl : slope * dl;
                if (dsrc != nullptr) dsrc[(n * d + u) * heads + k] += dz;
                if (ddst != nullptr) ddst[(n * d + v) * heads + k] += dz;
              }
            }
          }
        }
      });
}

}  // namespace tmm::ops
