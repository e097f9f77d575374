#include "tmm/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "tmm/errors.hpp"
#include "tmm/ops.hpp"

namespace tmm::confidence {
namespace {

void check_simplex(std::span<const double> probs) {
  if (probs.empty()) throw DataError("empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("probability " + std::to_string(p) + " outside [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("probabilities sum to " + std::to_string(total));
}

void check_label(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(probs.size()) + ")");
  }
}

}  // namespace

Mode parse_mode(std::string_view name) {
  if (name == "tfcp") return Mode::kTfcp;
  if (name == "tcp") return Mode::kTcp;
  if (name == "nn") return Mode::kNn;
  throw ConfigError("unknown confidence mode '" + std::string(name) + "' (expected tfcp, tcp or nn)");
}

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::kTfcp: return "TFCP";
    case Mode::kTcp: return "TCP";
    case Mode::kNn: return "NN";
  }
  return "?";
}

double mcp(std::span<const double> probs) {
  check_simplex(probs);
  return *std::max_element(probs.begin(), probs.end());
}

double tcp(std::span<const double> probs, int label) {
  check_simplex(probs);
  check_label(probs, label);
  return probs[static_cast<std::size_t>(label)];
}

double fcp(std::span<const double> probs, int label) {
  check_simplex(probs);
  check_label(probs, label);
  if (probs.size() < 2) throw DataError("fcp needs at least 2 classes");
  double best = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (c != static_cast<std::size_t>(label)) best = std::max(best, probs[c]);
  }
  return best;
}

double tfcp(double tcp, double fcp) {
  const double t = std::clamp(tcp, kClampEps, 1.0 - kClampEps);
  const double f = std::clamp(fcp, kClampEps, 1.0 - kClampEps);
  return 2.0 / (1.0 / t + 1.0 / (1.0 - f));
}

Var tfcp(Var tcp, Var fcp) {
  Var t = ops::clamp(tcp, kClampEps, 1.0 - kClampEps);
  Var f = ops::clamp(fcp, kClampEps, 1.0 - kClampEps);
  Var inv_sum = ops::add(ops::reciprocal(t), ops::reciprocal(ops::affine(f, -1.0, 1.0)));
  return ops::scale(ops::reciprocal(inv_sum), 2.0);
}

Var perceptron(Var x, const Perceptron& net) {
  Var hidden = ops::elu(ops::add_bias(ops::matmul(x, net.w1), net.b1));
  return ops::sigmoid(ops::add_bias(ops::matmul(hidden, net.w2), net.b2));
}

Estimates estimate_confidence(Var z, const ConfidenceNets& nets) {
  Var t = perceptron(z, nets.tcp_net);
  Var f = perceptron(z, nets.fcp_net);
  return {t, f, tfcp(t, f)};
}

Targets confidence_targets(Var z, const fusion::LinearHead& classifier, std::span<const int> labels) {
  Var logits = fusion::linear(z, classifier);
  Var probs = ops::softmax(logits, 1);
  Var t = ops::gather_labels(probs, labels);
  Var f = ops::max_excluding_label(probs, labels);
  return {t, f, tfcp(t, f), ops::cross_entropy(logits, labels)};
}

Var confidence_loss(Var z, std::span<const int> labels, const ConfidenceNets& nets) {
  const Targets target = confidence_targets(z, nets.classifier, labels);
  const Estimates estimate = estimate_confidence(z, nets);
  return ops::add(ops::mse(target.tfcp, estimate.tfcp), target.cls_loss);
}

Var apply_confidence(Var tfcp_hat, Var z) { return ops::row_scale(z, tfcp_hat); }

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "sample_id,modality,tcp_hat,fcp_hat,tfcp_hat\n" << std::setprecision(17);
  for (const ScoreRow& r : rows) {
    out << r.sample_id << ',' << r.modality << ',' << r.tcp << ',' << r.fcp << ',' << r.tfcp << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace tmm::confidence
