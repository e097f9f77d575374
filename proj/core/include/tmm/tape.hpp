#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tmm/array.hpp"

namespace tmm {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid for the
// lifetime of the tape that produced it.
class Var {
 public:
  Var() = default;

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Parameter name -> gradient of identical shape.
using Gradients = std::map<std::string, Array>;

// Named learnable arrays. std::map keeps iteration order deterministic.
using ParamStore = std::map<std::string, Array>;

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// so the append order is a topological order and backward() is a single
// reverse sweep. A tape is single-threaded; distinct tapes are independent.
class Tape {
 public:
  // Receives the tape (to reach input gradients), the node's output value and
  // the gradient flowing into it.
  using BackwardFn = std::function<void(Tape&, const Array& out_value, const Array& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  Var parameter(const std::string& name, Array value);

  // Records the output of a primitive. Throws NumericError naming `op` if the
  // value holds NaN or Inf.
  Var record(const char* op, Array value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(const char* op, Array value, const std::vector<Var>& inputs, BackwardFn backward);

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient buffer of `v`, allocated as zeros on first access. Backward
  // functions accumulate into it.
  Array& grad(Var v);

  // Reverse sweep from a scalar loss. Returns the gradient of every
  // registered parameter (zeros for parameters the loss does not reach).
  Gradients backward(Var loss);

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array value;
    Array grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  std::vector<std::size_t> params_;
};

// Binds every entry of a ParamStore as a tape parameter.
std::map<std::string, Var> bind_parameters(Tape& tape, const ParamStore& store);

}  // namespace tmm
