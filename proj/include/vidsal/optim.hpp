#pragma once

// First-order optimizers keyed by parameter name. State is kept in double.

#include <map>
#include <span>
#include <string>
#include <vector>

namespace vidsal::optim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  template <class Real>
  void step(const std::string& key, std::span<Real> param, std::span<const Real> grad);

  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamConfig config_;
  std::map<std::string, Slot> slots_;
};

// v = momentum * v + g; p -= lr * v
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum) : learning_rate_(learning_rate), momentum_(momentum) {}

  template <class Real>
  void step(const std::string& key, std::span<Real> param, std::span<const Real> grad);

 private:
  double learning_rate_;
  double momentum_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace vidsal::optim
