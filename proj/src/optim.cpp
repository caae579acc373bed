#include "vidsal/optim.hpp"

#include <cmath>

#include "vidsal/error.hpp"

namespace vidsal::optim {

template <class Real>
void Adam::step(const std::string& key, std::span<Real> param, std::span<const Real> grad) {
  if (param.size() != grad.size()) throw ShapeError("adam: gradient size mismatch for " + key);
  Slot& s = slots_[key];
  if (s.m.empty()) {
    s.m.assign(param.size(), 0.0);
    s.v.assign(param.size(), 0.0);
  }
  ++s.t;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1 - std::pow(b1, double(s.t)), c2 = 1 - std::pow(b2, double(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    s.m[i] = b1 * s.m[i] + (1 - b1) * g;
    s.v[i] = b2 * s.v[i] + (1 - b2) * g * g;
    const double update = config_.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
    param[i] = static_cast<Real>(double(param[i]) - update);
  }
}

template <class Real>
void SgdMomentum::step(const std::string& key, std::span<Real> param, std::span<const Real> grad) {
  if (param.size() != grad.size()) throw ShapeError("sgd: gradient size mismatch for " + key);
  auto& v = velocity_[key];
  if (v.empty()) v.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = momentum_ * v[i] + double(grad[i]);
    param[i] = static_cast<Real>(double(param[i]) - learning_rate_ * v[i]);
  }
}

template void Adam::step(const std::string&, std::span<float>, std::span<const float>);
template void Adam::step(const std::string&, std::span<double>, std::span<const double>);
template void SgdMomentum::step(const std::string&, std::span<float>, std::span<const float>);
template void SgdMomentum::step(const std::string&, std::span<double>, std::span<const double>);

}  // namespace vidsal::optim
