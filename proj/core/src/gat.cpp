#include "tmm/gat.hpp"

#include "tmm/errors.hpp"
#include "tmm/ops.hpp"

namespace tmm::gat {
namespace {

// h [B, d, f_in] -> W h as [B, d, K * f_head].
Var project_nodes(Var h, const GatLayerParams& params) {
  if (h.value().rank() != 3) {
    throw DimensionError("gat: node features must be [B, d, f], got " + shape_string(h.shape()));
  }
  const std::size_t b = h.shape()[0];
  const std::size_t d = h.shape()[1];
  const std::size_t f_in = h.shape()[2];
  const std::size_t width = params.weight.shape().at(1);
  if (params.weight.shape()[0] != f_in || width != params.heads() * params.head_width() ||
      params.attn_dst.shape() != params.attn_src.shape()) {
    throw DimensionError("gat: layer parameters " + shape_string(params.weight.shape()) + ", " +
                         shape_string(params.attn_src.shape()) + " do not fit features " +
                         shape_string(h.shape()));
  }
  Var flat = ops::reshape(h, {b * d, f_in});
  return ops::reshape(ops::matmul(flat, params.weight), {b, d, width});
}

void check_order(Var h, const rri::EdgeMatrix& edges) {
  if (h.value().rank() != 3 || h.shape()[1] != edges.order()) {
    throw DimensionError("gat: features " + shape_string(h.shape()) + " do not match an edge matrix of order " +
                         std::to_string(edges.order()));
  }
}

Var attention_from_projection(Var wh, const rri::EdgeMatrix& edges, const GatLayerParams& params) {
  Var src = ops::head_scores(wh, params.attn_src);
  Var dst = ops::head_scores(wh, params.attn_dst);
  return ops::masked_attention(src, dst, edges.adjacency);
}

}  // namespace

Var attention_coefficients(Var h, const rri::EdgeMatrix& edges, const GatLayerParams& params) {
  check_order(h, edges);
  return attention_from_projection(project_nodes(h, params), edges, params);
}

Var gat_layer(Var h, const rri::EdgeMatrix& edges, const GatLayerParams& params) {
  check_order(h, edges);
  Var wh = project_nodes(h, params);
  Var src = ops::head_scores(wh, params.attn_src);
  Var dst = ops::head_scores(wh, params.attn_dst);
  return ops::elu(ops::graph_attention(wh, src, dst, edges.adjacency));
}

Var readout(Var node_embeddings) {
  if (node_embeddings.value().rank() != 3) {
    throw DimensionError("readout: expected [B, d, f], got " + shape_string(node_embeddings.shape()));
  }
  return ops::mean_axis(node_embeddings, 1);
}

Var multilevel_encode(Var h0, const rri::EdgeMatrix& edges, const EncoderConfig& config,
                      std::span<const GatLayerParams> layers) {
  if (config.levels != 3) {
    throw ConfigError("multilevel_encode: the encoder uses exactly 3 levels, got " +
                      std::to_string(config.levels));
  }
  if (layers.size() != config.levels) {
    throw ConfigError("multilevel_encode: " + std::to_string(layers.size()) + " layers for " +
                      std::to_string(config.levels) + " levels");
  }
  std::vector<Var> pooled;
  Var h = h0;
  for (const GatLayerParams& layer : layers) {
    h = gat_layer(h, edges, layer);
    pooled.push_back(readout(h));
  }
  return ops::concat(pooled, 1);
}

Var encode_graph(Tape& tape, const rri::SampleGraph& graph, const EncoderConfig& config,
                 std::span<const GatLayerParams> layers) {
  const Array& x = graph.node_features;
  Var h0 = tape.constant(x.reshaped({1, x.extent(0), x.extent(1)}));
  return multilevel_encode(h0, *graph.edges, config, layers);
}

}  // namespace tmm::gat
