#include "tmm/model.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "tmm/errors.hpp"
#include "tmm/fusion.hpp"
#include "tmm/ops.hpp"

namespace tmm::model {
namespace {

using ParamMap = std::map<std::string, Var>;

std::string mod_prefix(std::size_t m) { return "m" + std::to_string(m) + "."; }

const Var& get(const ParamMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ConfigError("missing model parameter '" + name + "'");
  return it->second;
}

struct ShapeSpec {
  Shape shape;
  bool bias = false;
};

// Every parameter of the architecture with its shape.
std::map<std::string, ShapeSpec> layout(const ModelConfig& c, std::size_t modalities, std::size_t classes) {
  std::map<std::string, ShapeSpec> out;
  const std::size_t heads = c.encoder.heads;
  const std::size_t fh = c.encoder.head_width;
  const std::size_t layer_w = c.encoder.layer_width();
  const std::size_t view_w = c.encoder.view_width();
  const std::size_t att = c.att_width;
  const std::size_t zw = c.modal_width();
  const auto matrix = [&](const std::string& name, std::size_t r, std::size_t k) { out[name] = {{r, k}, false}; };
  const auto bias = [&](const std::string& name, std::size_t k) { out[name] = {{k}, true}; };
  const auto perceptron = [&](const std::string& p) {
    matrix(p + "w1", zw, c.conf_hidden);
    bias(p + "b1", c.conf_hidden);
    matrix(p + "w2", c.conf_hidden, 1);
    bias(p + "b2", 1);
  };
  for (std::size_t m = 0; m < modalities; ++m) {
    const std::string pm = mod_prefix(m);
    std::vector<std::string> views;
    if (c.use_trri) views.push_back("t");
    if (c.use_rri) views.push_back("r");
    for (const std::string& v : views) {
      for (std::size_t l = 0; l < c.encoder.levels; ++l) {
        const std::string pl = pm + v + ".l" + std::to_string(l) + ".";
        matrix(pl + "weight", l == 0 ? 1 : layer_w, layer_w);
        matrix(pl + "attn_src", heads, fh);
        matrix(pl + "attn_dst", heads, fh);
      }
      for (const char* role : {"q", "k", "v"}) matrix(pm + "cv." + v + "." + role, view_w, att);
    }
    matrix(pm + "aux.weight", zw, classes);
    bias(pm + "aux.bias", classes);
    if (c.confidence == confidence::Mode::kNn) {
      perceptron(pm + "conf.nn.");
    } else {
      matrix(pm + "conf.cls.weight", zw, classes);
      bias(pm + "conf.cls.bias", classes);
      perceptron(pm + "conf.tcp.");
      if (c.confidence == confidence::Mode::kTfcp) perceptron(pm + "conf.fcp.");
    }
  }
  std::size_t fused = zw;
  if (modalities >= 2) {
    fused = modalities * (modalities - 1) * att;
    for (std::size_t m = 0; m < modalities; ++m) {
      for (std::size_t j = 0; j < modalities; ++j) {
        if (j == m) continue;
        const std::string p = "cm." + std::to_string(m) + "." + std::to_string(j) + ".";
        for (const char* role : {"q", "k", "v"}) matrix(p + role, zw, att);
      }
    }
  }
  matrix("final.weight", fused, classes);
  bias("final.bias", classes);
  return out;
}

gat::GatLayerParams layer_params(const ParamMap& p, const std::string& prefix) {
  return {get(p, prefix + "weight"), get(p, prefix + "attn_src"), get(p, prefix + "attn_dst")};
}

fusion::Projections projections(const ParamMap& p, const std::string& prefix) {
  return {get(p, prefix + "q"), get(p, prefix + "k"), get(p, prefix + "v")};
}

fusion::LinearHead head(const ParamMap& p, const std::string& prefix) {
  return {get(p, prefix + "weight"), get(p, prefix + "bias")};
}

confidence::Perceptron perceptron(const ParamMap& p, const std::string& prefix) {
  return {get(p, prefix + "w1"), get(p, prefix + "b1"), get(p, prefix + "w2"), get(p, prefix + "b2")};
}

Var encode_view(const ParamMap& p, const ModelConfig& c, Var h0, const rri::EdgeMatrix& edges,
                const std::string& prefix) {
  std::vector<gat::GatLayerParams> layers;
  for (std::size_t l = 0; l < c.encoder.levels; ++l) layers.push_back(layer_params(p, prefix + ".l" + std::to_string(l) + "."));
  return gat::multilevel_encode(h0, edges, c.encoder, layers);
}

std::uint64_t name_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h ^ (seed * 0x9E3779B97F4A7C15ULL);
}

Var sum_scalars(Tape& tape, const std::vector<Var>& terms) {
  if (terms.empty()) return tape.constant(Array::scalar(0.0));
  std::vector<Var> flat;
  for (Var v : terms) flat.push_back(ops::reshape(v, {1}));
  return ops::sum(ops::concat(flat, 0));
}

Array column_means(const Array& x, std::span<const std::size_t> rows, std::vector<double>& mean,
                   std::vector<double>& scale) {
  const std::size_t d = x.extent(1);
  mean.assign(d, 0.0);
  scale.assign(d, 0.0);
  Array picked(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      picked.at(i, r) = x.at(rows[i], r);
      mean[r] += picked.at(i, r);
    }
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      const double dev = picked.at(i, r) - mean[r];
      scale[r] += dev * dev;
    }
  }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(rows.size()));
    if (!(s > 0.0)) s = 1.0;
  }
  return picked;
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder.levels != 3) throw ConfigError("the encoder uses exactly 3 levels");
  if (encoder.heads == 0 || encoder.head_width == 0) throw ConfigError("heads and head_width must be positive");
  if (att_width == 0 || conf_hidden == 0) throw ConfigError("att_width and conf_hidden must be positive");
  if (!(lambda_t > -1.0 && lambda_t <= 1.0) || !(lambda_r > -1.0 && lambda_r <= 1.0)) {
    throw ConfigError("thresholds must lie in (-1, 1]");
  }
}

std::size_t ModelConfig::modal_width() const {
  if (use_trri && use_rri) return 2 * att_width;
  if (use_trri || use_rri) return att_width;
  return 1;
}

std::string ModelConfig::variant_name() const {
  std::string graphs;
  if (use_trri && use_rri) graphs = "T-RRI+R-RRI";
  else if (use_trri) graphs = "T-RRI";
  else if (use_rri) graphs = "R-RRI";
  else graphs = "none";
  return graphs + "/" + confidence::mode_name(confidence);
}

ParamStore init_params(const ModelConfig& config, std::size_t d, std::size_t modalities, std::size_t classes,
                       std::uint64_t seed) {
  config.validate();
  if (d == 0 || modalities == 0 || classes < 2) throw ConfigError("model needs d >= 1, M >= 1, C >= 2");
  ParamStore store;
  for (const auto& [name, spec] : layout(config, modalities, classes)) {
    Array value(spec.shape, 0.0);
    if (!spec.bias) {
      // Seeded per name so parameters shared by two variants start equal.
      std::mt19937_64 rng(name_seed(seed, name));
      std::size_t fan_in = spec.shape[0];
      std::size_t fan_out = spec.shape[1];
      // Attention vectors score (W h_u || W h_v): one 2 f_head -> 1 map per head.
      if (name.ends_with("attn_src") || name.ends_with("attn_dst")) {
        fan_in = 2 * spec.shape[1];
        fan_out = 1;
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (double& v : value.data()) v = u(rng);
    }
    store.emplace(name, std::move(value));
  }
  return store;
}

TmmModel build_model(const data::Dataset& dataset, std::span<const std::size_t> train_rows,
                     const ModelConfig& config, std::uint64_t seed) {
  dataset.validate();
  config.validate();
  if (train_rows.size() < 2) throw DataError("need at least 2 training rows");
  TmmModel model;
  model.config = config;
  model.roi_ids = dataset.roi_ids();
  model.classes = dataset.classes();
  for (const FeatureMatrix& f : dataset.modalities) model.modalities.push_back(f.modality);
  model.transcriptomic =
      rri::build_edge_matrix(dataset.expression.values, config.lambda_t, "transcriptomic", model.roi_ids);
  for (const FeatureMatrix& f : dataset.modalities) {
    std::vector<double> mean;
    std::vector<double> scale;
    Array picked = column_means(f.values, train_rows, mean, scale);
    model.feature_mean.push_back(std::move(mean));
    model.feature_scale.push_back(std::move(scale));
    model.radiomic.push_back(rri::build_edge_matrix(picked, config.lambda_r, f.modality, model.roi_ids));
  }
  model.params = init_params(config, model.roi_ids.size(), model.modalities.size(), model.classes, seed);
  return model;
}

std::vector<Array> prepare_features(const TmmModel& model, const data::Dataset& dataset,
                                    std::span<const std::size_t> rows) {
  if (dataset.modalities.size() != model.modalities.size()) {
    throw DataError("dataset has " + std::to_string(dataset.modalities.size()) + " modalities, model expects " +
                    std::to_string(model.modalities.size()));
  }
  std::vector<Array> out;
  for (std::size_t m = 0; m < model.modalities.size(); ++m) {
    const FeatureMatrix& f = dataset.modalities[m];
    if (f.modality != model.modalities[m] || f.roi_ids != model.roi_ids) {
      throw DataError("modality '" + f.modality + "' does not match the model's modality '" + model.modalities[m] +
                      "' and ROI ids");
    }
    const std::size_t d = model.roi_ids.size();
    Array x(Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= f.values.extent(0)) throw DataError("row index " + std::to_string(rows[i]) + " out of range");
      for (std::size_t r = 0; r < d; ++r) {
        x.at(i, r) = (f.values.at(rows[i], r) - model.feature_mean[m][r]) / model.feature_scale[m][r];
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::map<std::string, Var> bind_constants(Tape& tape, const ParamStore& params) {
  std::map<std::string, Var> out;
  for (const auto& [name, value] : params) out.emplace(name, tape.constant(value));
  return out;
}

Output forward(Tape& tape, const std::map<std::string, Var>& p, const TmmModel& model,
               const std::vector<Array>& features, std::span<const int> labels, LossWeights weights) {
  const ModelConfig& c = model.config;
  const std::size_t mods = model.modalities.size();
  if (features.size() != mods) {
    throw DimensionError("forward: " + std::to_string(features.size()) + " feature matrices for " +
                         std::to_string(mods) + " modalities");
  }
  const std::size_t b = features[0].extent(0);
  const std::size_t d = model.roi_ids.size();
  const bool train = !labels.empty();
  Output out;
  std::vector<Var> gat_losses;
  std::vector<Var> conf_losses;
  std::vector<Var> trusted;
  for (std::size_t m = 0; m < mods; ++m) {
    const std::string pm = mod_prefix(m);
    if (features[m].rank() != 2 || features[m].extent(0) != b || features[m].extent(1) != d) {
      throw DimensionError("forward: modality " + std::to_string(m) + " features " +
                           shape_string(features[m].shape()) + " do not match [" + std::to_string(b) + "x" +
                           std::to_string(d) + "]");
    }
    Var x = tape.constant(features[m]);
    Var z;
    if (c.use_trri || c.use_rri) {
      Var h0 = ops::reshape(x, {b, d, 1});
      Var ft;
      Var fr;
      if (c.use_trri) ft = encode_view(p, c, h0, model.transcriptomic, pm + "t");
      if (c.use_rri) fr = encode_view(p, c, h0, model.radiomic[m], pm + "r");
      if (c.use_trri && c.use_rri) {
        z = fusion::cross_view_fuse(ft, fr, projections(p, pm + "cv.t."), projections(p, pm + "cv.r."));
      } else if (c.use_trri) {
        z = fusion::self_attend(ft, projections(p, pm + "cv.t."));
      } else {
        z = fusion::self_attend(fr, projections(p, pm + "cv.r."));
      }
    } else {
      z = ops::reshape(ops::mean_axis(x, 1), {b, 1});
    }

    const fusion::LinearHead aux = head(p, pm + "aux.");
    if (train) {
      fusion::ClassifierOutput co = fusion::modality_classifier(z, aux, labels);
      out.modal_logits.push_back(co.logits);
      gat_losses.push_back(co.loss);
    } else {
      out.modal_logits.push_back(fusion::linear(z, aux));
    }

    Var weight;
    switch (c.confidence) {
      case confidence::Mode::kTfcp: {
        const confidence::ConfidenceNets nets{head(p, pm + "conf.cls."), perceptron(p, pm + "conf.tcp."),
                                              perceptron(p, pm + "conf.fcp.")};
        const confidence::Estimates est = confidence::estimate_confidence(z, nets);
        out.tcp_hat.push_back(est.tcp);
        out.fcp_hat.push_back(est.fcp);
        weight = est.tfcp;
        if (train) {
          const confidence::Targets target = confidence::confidence_targets(z, nets.classifier, labels);
          conf_losses.push_back(ops::add(ops::mse(target.tfcp, est.tfcp), target.cls_loss));
        }
        break;
      }
      case confidence::Mode::kTcp: {
        const fusion::LinearHead cls = head(p, pm + "conf.cls.");
        Var t = confidence::perceptron(z, perceptron(p, pm + "conf.tcp."));
        out.tcp_hat.push_back(t);
        out.fcp_hat.emplace_back();
        weight = t;
        if (train) {
          const confidence::Targets target = confidence::confidence_targets(z, cls, labels);
          conf_losses.push_back(ops::add(ops::mse(target.tcp, t), target.cls_loss));
        }
        break;
      }
      case confidence::Mode::kNn: {
        weight = confidence::perceptron(z, perceptron(p, pm + "conf.nn."));
        out.tcp_hat.emplace_back();
        out.fcp_hat.emplace_back();
        break;
      }
    }
    out.weights.push_back(weight);
    trusted.push_back(confidence::apply_confidence(weight, z));
  }

  Var u;
  if (mods >= 2) {
    std::vector<std::vector<fusion::Projections>> proj(mods, std::vector<fusion::Projections>(mods));
    for (std::size_t m = 0; m < mods; ++m) {
      for (std::size_t j = 0; j < mods; ++j) {
        if (j != m) proj[m][j] = projections(p, "cm." + std::to_string(m) + "." + std::to_string(j) + ".");
      }
    }
    u = fusion::cross_modal_fuse(trusted, proj);
  } else {
    u = trusted[0];
  }
  out.final_logits = fusion::final_classifier(u, head(p, "final."));

  if (train) {
    out.l_gat = sum_scalars(tape, gat_losses);
    out.l_conf = sum_scalars(tape, conf_losses);
    out.l_final = ops::cross_entropy(out.final_logits, labels);
    out.total = ops::add(ops::add(ops::scale(out.l_gat, weights.eta1), ops::scale(out.l_conf, weights.eta2)),
                         out.l_final);
  }
  return out;
}

Array predict_proba(const TmmModel& model, const std::vector<Array>& features) {
  Tape tape;
  const auto params = bind_constants(tape, model.params);
  Output out = forward(tape, params, model, features);
  return ops::softmax(out.final_logits, 1).value();
}

Array predict_proba(const TmmModel& model, const data::Dataset& dataset, std::span<const std::size_t> rows) {
  return predict_proba(model, prepare_features(model, dataset, rows));
}

std::vector<std::vector<ConfidenceEstimate>> estimate_confidence(const TmmModel& model,
                                                                 const std::vector<Array>& features) {
  Tape tape;
  const auto params = bind_constants(tape, model.params);
  Output out = forward(tape, params, model, features);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<ConfidenceEstimate>> result;
  for (std::size_t m = 0; m < out.weights.size(); ++m) {
    const Array& w = out.weights[m].value();
    std::vector<ConfidenceEstimate> rows(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      rows[i].weight = w[i];
      rows[i].tcp = out.tcp_hat[m].valid() ? out.tcp_hat[m].value()[i] : nan;
      rows[i].fcp = out.fcp_hat[m].valid() ? out.fcp_hat[m].value()[i] : nan;
    }
    result.push_back(std::move(rows));
  }
  return result;
}

namespace {

nlohmann::json array_json(const Array& a) {
  return {{"shape", a.shape()}, {"data", a.values()}};
}

Array array_from_json(const nlohmann::json& j) {
  return Array(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

nlohmann::json edges_json(const rri::EdgeMatrix& e) {
  return {{"threshold", e.threshold}, {"source", e.source}, {"adjacency", array_json(e.adjacency)}};
}

rri::EdgeMatrix edges_from_json(const nlohmann::json& j) {
  return {array_from_json(j.at("adjacency")), j.at("threshold").get<double>(), j.at("source").get<std::string>()};
}

}  // namespace

void save_model(const TmmModel& model, const std::filesystem::path& path) {
  const ModelConfig& c = model.config;
  nlohmann::json j;
  j["format"] = "tmm-model-1";
  j["config"] = {{"levels", c.encoder.levels},       {"heads", c.encoder.heads},
                 {"head_width", c.encoder.head_width}, {"att_width", c.att_width},
                 {"conf_hidden", c.conf_hidden},       {"use_trri", c.use_trri},
                 {"use_rri", c.use_rri},               {"confidence", confidence::mode_name(c.confidence)},
                 {"lambda_t", c.lambda_t},             {"lambda_r", c.lambda_r}};
  j["modalities"] = model.modalities;
  j["roi_ids"] = model.roi_ids;
  j["classes"] = model.classes;
  j["feature_mean"] = model.feature_mean;
  j["feature_scale"] = model.feature_scale;
  j["transcriptomic"] = edges_json(model.transcriptomic);
  j["radiomic"] = nlohmann::json::array();
  for (const rri::EdgeMatrix& e : model.radiomic) j["radiomic"].push_back(edges_json(e));
  j["params"] = nlohmann::json::object();
  for (const auto& [name, value] : model.params) j["params"][name] = array_json(value);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

TmmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "tmm-model-1") throw ParseError(path.string() + ": unknown model format");
    TmmModel model;
    const auto& c = j.at("config");
    model.config.encoder.levels = c.at("levels").get<std::size_t>();
    model.config.encoder.heads = c.at("heads").get<std::size_t>();
    model.config.encoder.head_width = c.at("head_width").get<std::size_t>();
    model.config.att_width = c.at("att_width").get<std::size_t>();
    model.config.conf_hidden = c.at("conf_hidden").get<std::size_t>();
    model.config.use_trri = c.at("use_trri").get<bool>();
    model.config.use_rri = c.at("use_rri").get<bool>();
    std::string mode = c.at("confidence").get<std::string>();
    for (char& ch : mode) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    model.config.confidence = confidence::parse_mode(mode);
    model.config.lambda_t = c.at("lambda_t").get<double>();
    model.config.lambda_r = c.at("lambda_r").get<double>();
    model.modalities = j.at("modalities").get<std::vector<std::string>>();
    model.roi_ids = j.at("roi_ids").get<std::vector<std::string>>();
    model.classes = j.at("classes").get<std::size_t>();
    model.feature_mean = j.at("feature_mean").get<std::vector<std::vector<double>>>();
    model.feature_scale = j.at("feature_scale").get<std::vector<std::vector<double>>>();
    model.transcriptomic = edges_from_json(j.at("transcriptomic"));
    for (const auto& e : j.at("radiomic")) model.radiomic.push_back(edges_from_json(e));
    for (const auto& [name, value] : j.at("params").items()) model.params.emplace(name, array_from_json(value));
    const auto expected = layout(model.config, model.modalities.size(), model.classes);
    if (expected.size() != model.params.size()) throw ParseError(path.string() + ": parameter set does not match config");
    for (const auto& [name, spec] : expected) {
      auto it = model.params.find(name);
      if (it == model.params.end() || it->second.shape() != spec.shape) {
        throw ParseError(path.string() + ": parameter '" + name + "' missing or misshapen");
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace tmm::model
