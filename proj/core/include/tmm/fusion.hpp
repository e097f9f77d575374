#pragma once

#include <span>
#include <vector>

#include "tmm/tape.hpp"

// Attention-based fusion across views and modalities, plus the linear
// classifier heads that read the fused representations.
namespace tmm::fusion {

// Query/key/value projections, each f_in x f_att.
struct Projections {
  Var query;
  Var key;
  Var value;
};

// logits = x W + b with W: f_in x C, b: C.
struct LinearHead {
  Var weight;
  Var bias;
};

Var linear(Var x, const LinearHead& head);

// softmax(Q K^T / sqrt(f)) V. Rank 2 ([q,f], [r,f], [r,g] -> [q,g]) or
// batched rank 3 ([B,q,f], [B,r,f], [B,r,g] -> [B,q,g]).
Var scaled_dot_attention(Var q, Var k, Var v);

// Views as length-1 sequences per sample. F_t, F_r: [B, f_view].
//   Z_t = Att(F_t Wq_t, F_r Wk_r, F_r Wv_r), Z_r = Att(F_r Wq_r, F_t Wk_t, F_t Wv_t)
// Returns Z_t || Z_r as [B, 2 f_att].
Var cross_view_fuse(Var ft, Var fr, const Projections& t, const Projections& r);

// Single-view fallback: Att(F Wq, F Wk, F Wv) as [B, f_att].
Var self_attend(Var f, const Projections& p);

struct ClassifierOutput {
  Var logits;  // [B, C]
  Var loss;    // sum over samples of cross-entropy
};

ClassifierOutput modality_classifier(Var z, const LinearHead& head, std::span<const int> labels);

// h[m]: [B, f_z]; proj[m][j] for j != m (proj[m][m] is ignored).
//   U^m = ||_{j != m} Att(H^m Wq_mj, H^j Wk_mj, H^j Wv_mj),  U = ||_m U^m
// Result [B, M (M-1) f_att]. Throws ConfigError for M < 2.
Var cross_modal_fuse(const std::vector<Var>& h, const std::vector<std::vector<Projections>>& proj);

Var final_classifier(Var u, const LinearHead& head);

}  // namespace tmm::fusion
