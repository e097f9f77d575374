#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "tmm/array.hpp"
#include "tmm/tape.hpp"

// Differentiable primitives. Every function records its result on the tape
// its inputs belong to; all inputs of one call must share a tape.
namespace tmm::ops {

enum class Activation { kLeakyRelu, kElu, kSigmoid };

// Accepts "leaky-relu", "elu", "sigmoid"; throws ConfigError otherwise.
Activation parse_activation(std::string_view name);

inline constexpr double kLeakySlope = 0.2;

// --- elementwise -----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var affine(Var a, double factor, double shift);  // factor * a + shift
Var reciprocal(Var a);
// Clamps into [lo, hi]; gradient passes only where lo < a < hi.
Var clamp(Var a, double lo, double hi);
Var activation(Var a, Activation kind);
Var leaky_relu(Var a, double slope = kLeakySlope);
Var elu(Var a);
Var sigmoid(Var a);

// a[..., f] + bias[f]
Var add_bias(Var a, Var bias);
// a[n, ...] scaled per leading index by s[n, 1] (or s[n]).
Var row_scale(Var a, Var s);

// --- shape -----------------------------------------------------------------
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
std::vector<Var> split(Var a, std::size_t axis, const std::vector<std::size_t>& sizes);
Var transpose(Var a);        // rank 2
Var transpose_last2(Var a);  // rank 3, swaps the two trailing axes

// --- linear algebra --------------------------------------------------------
Var matmul(Var a, Var b);          // [p,q] x [q,r] -> [p,r]
Var batched_matmul(Var a, Var b);  // [B,p,q] x [B,q,r] -> [B,p,r]

// --- reductions ------------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
Var mean_axis(Var a, std::size_t axis);  // removes `axis`

// --- normalization and losses ---------------------------------------------
Var softmax(Var a, std::size_t axis);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean of squared differences.
Var mse(Var a, Var b);
// probs[i, labels[i]] as [n, 1].
Var gather_labels(Var probs, std::span<const int> labels);
// max_{c != labels[i]} probs[i, c] as [n, 1].
Var max_excluding_label(Var probs, std::span<const int> labels);

// --- graph attention -------------------------------------------------------
// wh: [B, d, K*f], attn: [K, f] -> [B, d, K] with out[b,u,k] = <wh[b,u,k-th block], attn[k]>.
Var head_scores(Var wh, Var attn);
// src, dst: [B, d, K]; mask: d x d 0/1 with at least one 1 per row.
// Returns alpha [B, K, d, d]: row u is the softmax over {v : mask(u,v)=1} of
// leaky_relu(src[b,u,k] + dst[b,v,k]); entries off the mask are exactly zero.
Var masked_attention(Var src, Var dst, const Array& mask, double slope = kLeakySlope);
// alpha: [B, K, d, d], wh: [B, d, K*f] -> [B, d, K*f]; head k aggregates its own block.
Var head_aggregate(Var alpha, Var wh);
// Fused head_aggregate(masked_attention(src, dst, mask), wh) that only visits
// edges. Same value and gradients as the composed form.
Var graph_attention(Var wh, Var src, Var dst, const Array& mask, double slope = kLeakySlope);

}  // namespace tmm::ops
