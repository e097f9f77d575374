#include "tmm/tape.hpp"

#include "tmm/errors.hpp"

namespace tmm {

const Array& Var::value() const {
  if (tape_ == nullptr) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw UsageError("Var does not belong to this tape");
  }
}

Var Tape::constant(Array value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Array value) {
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' holds non-finite values");
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  params_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Array value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Array value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id()].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Array& Tape::grad(Var v) {
  Node& node = nodes_[v.id()];
  if (!node.has_grad) {
    node.grad = Array(node.value.shape(), 0.0);
    node.has_grad = true;
  }
  return node.grad;
}

Gradients Tape::backward(Var loss) {
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (Node& node : nodes_) {
    node.has_grad = false;
    node.grad = Array();
  }
  grad(loss).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.value, node.grad);
  }
  Gradients out;
  for (std::size_t id : params_) {
    Node& node = nodes_[id];
    if (node.has_grad && !node.grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + node.param_name + "'");
    }
    out[node.param_name] = node.has_grad ? node.grad : Array(node.value.shape(), 0.0);
  }
  return out;
}

std::map<std::string, Var> bind_parameters(Tape& tape, const ParamStore& store) {
  std::map<std::string, Var> bound;
  for (const auto& [name, value] : store) bound.emplace(name, tape.parameter(name, value));
  return bound;
}

}  // namespace tmm
