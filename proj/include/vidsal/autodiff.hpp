#pragma once

// Reverse-mode automatic differentiation over a per-forward-pass tape.
//
// A Tape owns every tensor produced during one forward pass. Ops append a
// node holding the primal value, the ids of their inputs and a backward rule.
// Nodes are appended in execution order, so the tape is topologically sorted
// by construction and backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vidsal/tensor.hpp"

namespace vidsal::ad {

template <class Real>
class Tape;

// Lightweight handle to a node on a tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<Real>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

template <class Real>
class GradientStore {
 public:
  // nullptr when the node received no gradient (absent means zero).
  const Tensor<Real>* find(const Var<Real>& v) const { return find(v.id); }
  const Tensor<Real>* find(std::size_t id) const {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
  }
  bool contains(const Var<Real>& v) const { return grads_.contains(v.id); }
  const Tensor<Real>& at(const Var<Real>& v) const;
  std::size_t size() const { return grads_.size(); }

  void insert(std::size_t id, Tensor<Real> grad) { grads_.insert_or_assign(id, std::move(grad)); }

 private:
  std::unordered_map<std::size_t, Tensor<Real>> grads_;
};

template <class Real>
class Tape {
 public:
  // grad_out is dL/d(output). input_grads[i] accumulates dL/d(input i) and is
  // nullptr for inputs that do not require a gradient.
  using BackwardFn = std::function<void(const Tensor<Real>& grad_out, std::span<Tensor<Real>* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Real> leaf(Tensor<Real> value, bool requires_grad = false);
  Var<Real> constant(Tensor<Real> value) { return leaf(std::move(value), false); }

  // Appends an op output. The node requires a gradient iff any input does;
  // otherwise the backward rule is dropped.
  Var<Real> record(Tensor<Real> value, std::vector<Var<Real>> inputs, BackwardFn backward);

  const Tensor<Real>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  template <class R>
  friend GradientStore<R> backward(const Tape<R>& tape, const Var<R>& output);

  std::vector<Node> nodes_;
};

// Gradients of a scalar output with respect to every requires-grad node that
// the output depends on. Does not modify the tape; may be called repeatedly.
template <class Real>
GradientStore<Real> backward(const Tape<Real>& tape, const Var<Real>& output);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradientStore<float>;
extern template class GradientStore<double>;
extern template GradientStore<float> backward(const Tape<float>&, const Var<float>&);
extern template GradientStore<double> backward(const Tape<double>&, const Var<double>&);

}  // namespace vidsal::ad
