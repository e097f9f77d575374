#include "tmm/fusion.hpp"

#include <cmath>
#include <string>

#include "tmm/errors.hpp"
#include "tmm/ops.hpp"

namespace tmm::fusion {
namespace {

Var project(Var x, Var w) { return ops::matmul(x, w); }

// [B, f] -> [B, 1, f]
Var as_sequence(Var x) { return ops::reshape(x, {x.shape()[0], 1, x.shape()[1]}); }

Var attend_rows(Var query_src, Var kv_src, const Projections& p) {
  const std::size_t b = query_src.shape()[0];
  Var q = as_sequence(project(query_src, p.query));
  Var k = as_sequence(project(kv_src, p.key));
  Var v = as_sequence(project(kv_src, p.value));
  Var out = scaled_dot_attention(q, k, v);
  return ops::reshape(out, {b, out.shape()[2]});
}

void require_rows(const char* op, Var a, Var b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw DimensionError(std::string(op) + ": expected [B, f] inputs with equal B, got " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
}

}  // namespace

Var linear(Var x, const LinearHead& head) { return ops::add_bias(ops::matmul(x, head.weight), head.bias); }

Var scaled_dot_attention(Var q, Var k, Var v) {
  const std::size_t rank = q.value().rank();
  if ((rank != 2 && rank != 3) || k.value().rank() != rank || v.value().rank() != rank) {
    throw DimensionError("scaled_dot_attention: ranks of " + shape_string(q.shape()) + ", " +
                         shape_string(k.shape()) + ", " + shape_string(v.shape()) + " differ or are not 2/3");
  }
  const std::size_t f = q.shape()[rank - 1];
  if (k.shape()[rank - 1] != f || k.shape()[rank - 2] != v.shape()[rank - 2] ||
      (rank == 3 && (k.shape()[0] != q.shape()[0] || v.shape()[0] != q.shape()[0]))) {
    throw DimensionError("scaled_dot_attention: incompatible Q " + shape_string(q.shape()) + ", K " +
                         shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(f));
  if (rank == 2) {
    Var scores = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt);
    return ops::matmul(ops::softmax(scores, 1), v);
  }
  Var scores = ops::scale(ops::batched_matmul(q, ops::transpose_last2(k)), inv_sqrt);
  return ops::batched_matmul(ops::softmax(scores, 2), v);
}

Var cross_view_fuse(Var ft, Var fr, const Projections& t, const Projections& r) {
  require_rows("cross_view_fuse", ft, fr);
  Var zt = attend_rows(ft, fr, Projections{t.query, r.key, r.value});
  Var zr = attend_rows(fr, ft, Projections{r.query, t.key, t.value});
  return ops::concat({zt, zr}, 1);
}

Var self_attend(Var f, const Projections& p) { return attend_rows(f, f, p); }

ClassifierOutput modality_classifier(Var z, const LinearHead& head, std::span<const int> labels) {
  Var logits = linear(z, head);
  const double n = static_cast<double>(logits.shape()[0]);
  return {logits, ops::scale(ops::cross_entropy(logits, labels), n)};
}

Var cross_modal_fuse(const std::vector<Var>& h, const std::vector<std::vector<Projections>>& proj) {
  const std::size_t m_count = h.size();
  if (m_count < 2) {
    throw ConfigError("cross_modal_fuse: needs at least 2 modalities, got " + std::to_string(m_count));
  }
  if (proj.size() != m_count) {
    throw ConfigError("cross_modal_fuse: " + std::to_string(proj.size()) + " projection rows for " +
                      std::to_string(m_count) + " modalities");
  }
  std::vector<Var> blocks;
  for (std::size_t m = 0; m < m_count; ++m) {
    if (proj[m].size() != m_count) {
      throw ConfigError("cross_modal_fuse: projection row " + std::to_string(m) + " has " +
                        std::to_string(proj[m].size()) + " entries");
    }
    for (std::size_t j = 0; j < m_count; ++j) {
      if (j == m) continue;
      require_rows("cross_modal_fuse", h[m], h[j]);
      blocks.push_back(attend_rows(h[m], h[j], proj[m][j]));
    }
  }
  return ops::concat(blocks, 1);
}

Var final_classifier(Var u, const LinearHead& head) { return linear(u, head); }

}  // namespace tmm::fusion
