#include "tmm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tmm/errors.hpp"

namespace tmm::config {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

[[noreturn]] void bad_value(const std::string& origin, const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError(origin + ": " + key + " = '" + value + "' is not " + expected);
}

double to_double(const std::string& origin, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(origin, key, v, "a number");
  return out;
}

std::uint64_t to_unsigned(const std::string& origin, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(origin, key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& origin, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(origin, key, v, "a boolean");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& raw, F convert) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    if (!trim(cell).empty()) out.push_back(convert(cell));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void apply_spec(data::SyntheticSpec& s, const std::string& origin, const std::string& key, const std::string& v) {
  const std::string full = "spec." + key;
  if (key == "n") s.n = to_unsigned(origin, full, v);
  else if (key == "d") s.d = to_unsigned(origin, full, v);
  else if (key == "n_g") s.n_g = to_unsigned(origin, full, v);
  else if (key == "modalities") s.modalities = to_unsigned(origin, full, v);
  else if (key == "classes") s.classes = to_unsigned(origin, full, v);
  else if (key == "n_blocks") s.n_blocks = to_unsigned(origin, full, v);
  else if (key == "informative") s.informative = to_unsigned(origin, full, v);
  else if (key == "class_effect") s.class_effect = to_double(origin, full, v);
  else if (key == "sigma_lo") s.sigma_lo = to_double(origin, full, v);
  else if (key == "sigma_hi") s.sigma_hi = to_double(origin, full, v);
  else if (key == "modality_scale") {
    s.modality_scale = to_list<double>(v, [&](const std::string& c) { return to_double(origin, full, c); });
  } else if (key == "class_sizes") {
    s.class_sizes = to_list<std::size_t>(v, [&](const std::string& c) { return to_unsigned(origin, full, c); });
  } else {
    throw ConfigError(origin + ": unknown key '" + full + "'");
  }
}

void apply_train(train::TrainConfig& t, const std::string& origin, const std::string& key, const std::string& v) {
  const std::string full = "train." + key;
  if (key == "learning_rate") t.learning_rate = to_double(origin, full, v);
  else if (key == "weight_decay") t.weight_decay = to_double(origin, full, v);
  else if (key == "epochs") t.epochs = to_unsigned(origin, full, v);
  else if (key == "eta1") t.eta1 = to_double(origin, full, v);
  else if (key == "eta2") t.eta2 = to_double(origin, full, v);
  else if (key == "seed") t.seed = to_unsigned(origin, full, v);
  else throw ConfigError(origin + ": unknown key '" + full + "'");
}

void apply_model(model::ModelConfig& m, const std::string& origin, const std::string& key, const std::string& v) {
  const std::string full = "model." + key;
  if (key == "levels") m.encoder.levels = to_unsigned(origin, full, v);
  else if (key == "heads") m.encoder.heads = to_unsigned(origin, full, v);
  else if (key == "head_width") m.encoder.head_width = to_unsigned(origin, full, v);
  else if (key == "att_width") m.att_width = to_unsigned(origin, full, v);
  else if (key == "conf_hidden") m.conf_hidden = to_unsigned(origin, full, v);
  else if (key == "use_trri") m.use_trri = to_bool(origin, full, v);
  else if (key == "use_rri") m.use_rri = to_bool(origin, full, v);
  else if (key == "confidence") m.confidence = confidence::parse_mode(trim(v));
  else if (key == "lambda_t") m.lambda_t = to_double(origin, full, v);
  else if (key == "lambda_r") m.lambda_r = to_double(origin, full, v);
  else throw ConfigError(origin + ": unknown key '" + full + "'");
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(origin + ": key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string value = node.get_value<std::string>();
      if (section == "spec") apply_spec(out.spec, origin, key, value);
      else if (section == "train") apply_train(out.train, origin, key, value);
      else if (section == "model") apply_model(out.model, origin, key, value);
      else throw ConfigError(origin + ": unknown section [" + section + "]");
    }
  }
  out.spec.validate();
  out.train.validate();
  out.model.validate();
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream out;
  const auto join = [](const auto& values, auto conv) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + conv(values[i]);
    return s;
  };
  const data::SyntheticSpec& s = c.spec;
  out << "[spec]\n"
      << "n = " << s.n << "\nd = " << s.d << "\nn_g = " << s.n_g << "\nmodalities = " << s.modalities
      << "\nclasses = " << s.classes << "\nn_blocks = " << s.n_blocks << "\ninformative = " << s.informative
      << "\nclass_effect = " << fmt(s.class_effect) << "\nsigma_lo = " << fmt(s.sigma_lo)
      << "\nsigma_hi = " << fmt(s.sigma_hi) << '\n';
  if (!s.modality_scale.empty()) out << "modality_scale = " << join(s.modality_scale, fmt) << '\n';
  if (!s.class_sizes.empty()) {
    out << "class_sizes = " << join(s.class_sizes, [](std::size_t v) { return std::to_string(v); }) << '\n';
  }
  const train::TrainConfig& t = c.train;
  out << "\n[train]\n"
      << "learning_rate = " << fmt(t.learning_rate) << "\nweight_decay = " << fmt(t.weight_decay)
      << "\nepochs = " << t.epochs << "\neta1 = " << fmt(t.eta1) << "\neta2 = " << fmt(t.eta2)
      << "\nseed = " << t.seed << '\n';
  const model::ModelConfig& m = c.model;
  std::string mode = confidence::mode_name(m.confidence);
  for (char& ch : mode) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  out << "\n[model]\n"
      << "levels = " << m.encoder.levels << "\nheads = " << m.encoder.heads << "\nhead_width = " << m.encoder.head_width
      << "\natt_width = " << m.att_width << "\nconf_hidden = " << m.conf_hidden
      << "\nuse_trri = " << (m.use_trri ? "true" : "false") << "\nuse_rri = " << (m.use_rri ? "true" : "false")
      << "\nconfidence = " << mode << "\nlambda_t = " << fmt(m.lambda_t) << "\nlambda_r = " << fmt(m.lambda_r)
      << '\n';
  return out.str();
}

}  // namespace tmm::config
