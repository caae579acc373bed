#include "vidsal/autodiff.hpp"

#include <string>

namespace vidsal::ad {

template <class Real>
const Tensor<Real>& GradientStore<Real>::at(const Var<Real>& v) const {
  const Tensor<Real>* g = find(v);
  if (!g) throw ValueError("no gradient recorded for node " + std::to_string(v.id));
  return *g;
}

template <class Real>
Var<Real> Tape<Real>::leaf(Tensor<Real> value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}});
  return Var<Real>{this, nodes_.size() - 1};
}

template <class Real>
Var<Real> Tape<Real>::record(Tensor<Real> value, std::vector<Var<Real>> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape != this) throw ValueError("op input belongs to a different tape");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<Real>{this, nodes_.size() - 1};
}

template <class Real>
GradientStore<Real> backward(const Tape<Real>& tape, const Var<Real>& output) {
  if (output.tape != &tape || output.id >= tape.nodes_.size()) {
    throw ValueError("backward: output is not on this tape");
  }
  const auto& out_value = tape.nodes_[output.id].value;
  if (out_value.size() != 1) {
    throw ShapeError("backward: output must be scalar, got shape " + shape_string(out_value.shape()));
  }

  std::vector<std::optional<Tensor<Real>>> grads(output.id + 1);
  if (tape.nodes_[output.id].requires_grad) grads[output.id] = Tensor<Real>::filled(out_value.shape(), Real(1));

  std::vector<Tensor<Real>*> slots;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    const auto& node = tape.nodes_[id];
    if (!grads[id] || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!tape.nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor<Real>(tape.nodes_[in].value.shape());
      slots[k] = &*grads[in];
    }
    node.backward(*grads[id], slots);
  }

  GradientStore<Real> store;
  for (std::size_t id = 0; id <= output.id; ++id) {
    if (grads[id]) store.insert(id, std::move(*grads[id]));
  }
  return store;
}

template class Tape<float>;
template class Tape<double>;
template class GradientStore<float>;
template class GradientStore<double>;
template GradientStore<float> backward(const Tape<float>&, const Var<float>&);
template GradientStore<double> backward(const Tape<double>&, const Var<double>&);

}  // namespace vidsal::ad
