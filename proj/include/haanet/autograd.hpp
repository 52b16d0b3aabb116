#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <deque>
#include <vector>

#include "haanet/tensor.hpp"

namespace haanet {

template <typename S>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename S>
class Var {
 public:
  Var() = default;

  const Tensor<S>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  Tape<S>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<S>;
  Var(Tape<S>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<S>* tape_ = nullptr;
  std::size_t id_ = 0;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Linear record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and a single reverse sweep visits them in topological order. Parameter
/// leaves refer to caller-owned tensors, which must outlive the tape and stay
/// unmodified until backward() returns. A tape is single-use: backward() may
/// be called once.
template <typename S>
class Tape {
 public:
  /// Receives the cotangent of the node's output; accumulates into inputs via
  /// Tape::grad().
  using Backward = std::function<void(Tape&, std::span<const S>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Tensor<S> value) {
    Node node;
    node.value = std::move(value);
    node.value.set_requires_grad(false);
    return push(std::move(node));
  }

  /// Records a parameter; gradients reach param.grad when it requires grad.
  Var<S> leaf(Tensor<S>& param) {
    Node node;
    node.param = &param;
    node.requires_grad = param.requires_grad();
    return push(std::move(node));
  }

  Var<S> record(Tensor<S> value, std::initializer_list<Var<S>> inputs,
                Backward backward) {
    Node node;
    node.value = std::move(value);
    for (const Var<S>& in : inputs) {
      check_owned(in);
      node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  const Tensor<S>& value(std::size_t id) const {
    const Node& node = nodes_[id];
    return node.param ? *node.param : node.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Cotangent accumulator of a node, zero-initialized on first use.
  std::span<S> grad(std::size_t id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) node.grad.assign(value(id).size(), S(0));
    return node.grad;
  }

  void check_owned(const Var<S>& v) const {
    if (v.tape_ != this) throw TapeError("variable belongs to a different tape");
  }

  void backward(const Var<S>& root) {
    check_owned(root);
    if (consumed_) throw TapeError("backward called twice on the same tape");
    const Shape& s = value(root.id_).shape();
    if (s != Shape{1, 1, 1, 1}) {
      throw TapeError("backward root must be a scalar, got shape " + s.str());
    }
    consumed_ = true;
    if (!nodes_[root.id_].requires_grad) return;
    grad(root.id_)[0] = S(1);
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.requires_grad || node.grad.empty()) continue;
      if (node.param) {
        std::span<S> dst = node.param->grad_mut();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
      } else if (node.backward) {
        node.backward(*this, node.grad);
      }
      std::vector<S>().swap(node.grad);
    }
  }

  /// Id the next recorded node will receive.
  std::size_t next_id() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
    std::vector<S> grad;
  };

  Var<S> push(Node node) {
    if (consumed_) throw TapeError("cannot record onto a consumed tape");
    nodes_.push_back(std::move(node));
    return Var<S>(this, nodes_.size() - 1);
  }

  // Deque: references returned by value() survive later pushes.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace haanet
