#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmm/fusion.hpp"
#include "tmm/tape.hpp"

// True/false class probability confidence (TFCP) and the networks that
// estimate it from a modal representation.
namespace tmm::confidence {

inline constexpr double kClampEps = 1e-7;

// Which scalar weights a modality before cross-modal fusion.
//   kTfcp: harmonic TCP/FCP estimate, regressed on the TFCP target
//   kTcp:  TCP estimate alone, regressed on the TCP target
//   kNn:   a sigmoid perceptron trained only through the downstream loss
enum class Mode { kTfcp, kTcp, kNn };

Mode parse_mode(std::string_view name);  // "tfcp" | "tcp" | "nn"
const char* mode_name(Mode mode);        // "TFCP" | "TCP" | "NN"

// Scalar criteria on one probability vector. Inputs must lie on the simplex
// (sum 1 within 1e-9, entries in [0, 1]); labels must index a class.
double mcp(std::span<const double> probs);
double tcp(std::span<const double> probs, int label);
double fcp(std::span<const double> probs, int label);  // max over untrue classes
// 2 / (1/tcp + 1/(1 - fcp)) with both inputs clamped into [eps, 1 - eps].
double tfcp(double tcp, double fcp);

// Differentiable form of tfcp on [B, 1] columns.
Var tfcp(Var tcp, Var fcp);

// x -> sigmoid(elu(x W1 + b1) W2 + b2), output [B, 1].
struct Perceptron {
  Var w1;  // f_in x hidden
  Var b1;  // hidden
  Var w2;  // hidden x 1
  Var b2;  // 1
};

Var perceptron(Var x, const Perceptron& net);

struct ConfidenceNets {
  fusion::LinearHead classifier;  // shared head whose softmax defines the targets
  Perceptron tcp_net;
  Perceptron fcp_net;
};

struct Estimates {
  Var tcp;   // [B, 1]
  Var fcp;   // [B, 1]
  Var tfcp;  // [B, 1]
};

Estimates estimate_confidence(Var z, const ConfidenceNets& nets);

struct Targets {
  Var tcp;       // [B, 1]
  Var fcp;       // [B, 1]
  Var tfcp;      // [B, 1]
  Var cls_loss;  // mean cross-entropy of the shared head
};

// Targets from the shared classifier head. Not detached from the graph.
Targets confidence_targets(Var z, const fusion::LinearHead& classifier, std::span<const int> labels);

// mean_i (TFCP_i - tfcp_hat_i)^2 + L_Cls
Var confidence_loss(Var z, std::span<const int> labels, const ConfidenceNets& nets);

// H = tfcp_hat * Z, one scalar per row.
Var apply_confidence(Var tfcp_hat, Var z);

struct ScoreRow {
  std::string sample_id;
  std::string modality;
  double tcp = 0.0;
  double fcp = 0.0;
  double tfcp = 0.0;
};

// CSV with header sample_id,modality,tcp_hat,fcp_hat,tfcp_hat.
void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);

}  // namespace tmm::confidence
