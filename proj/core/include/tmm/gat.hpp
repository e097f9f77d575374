#pragma once

#include <span>
#include <vector>

#include "tmm/rri.hpp"
#include "tmm/tape.hpp"

// Multi-head graph attention encoder with the three-level readout.
namespace tmm::gat {

// One GAT layer. Heads are stored side by side: column block k of `weight`
// is W^k, row k of the attention vectors scores (W^k h_u || W^k h_v).
struct GatLayerParams {
  Var weight;    // f_in x (K * f_head)
  Var attn_src;  // K x f_head, applied to the attending node u
  Var attn_dst;  // K x f_head, applied to the neighbor v

  std::size_t heads() const { return attn_src.shape()[0]; }
  std::size_t head_width() const { return attn_src.shape()[1]; }
};

struct EncoderConfig {
  std::size_t levels = 3;
  std::size_t heads = 2;
  std::size_t head_width = 16;

  std::size_t layer_width() const { return heads * head_width; }
  std::size_t view_width() const { return levels * layer_width(); }
};

// alpha [B, K, d, d] for node features h [B, d, f_in]. Row u of head k is a
// softmax over E's neighbors of u; entries off the edge set are exactly 0.
Var attention_coefficients(Var h, const rri::EdgeMatrix& edges, const GatLayerParams& params);

// h [B, d, f_in] -> [B, d, K * f_head]: per head elu(sum_v alpha_uv W^k h_v),
// heads concatenated.
Var gat_layer(Var h, const rri::EdgeMatrix& edges, const GatLayerParams& params);

// Mean over nodes: [B, d, f] -> [B, f].
Var readout(Var node_embeddings);

// Three stacked GAT layers on the same edge set; the mean-pooled output of
// each layer is concatenated: [B, d, f0] -> [B, levels * K * f_head].
Var multilevel_encode(Var h0, const rri::EdgeMatrix& edges, const EncoderConfig& config,
                      std::span<const GatLayerParams> layers);

// Single-graph convenience: node features of `graph` as a batch of one.
Var encode_graph(Tape& tape, const rri::SampleGraph& graph, const EncoderConfig& config,
                 std::span<const GatLayerParams> layers);

}  // namespace tmm::gat
