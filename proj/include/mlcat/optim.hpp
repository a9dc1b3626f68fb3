#pragma once

// Adam with bias correction over a fixed list of named parameters.

#include <cmath>
#include <string>
#include <vector>

#include "mlcat/layers.hpp"

namespace mlcat {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class Adam {
 public:
  Adam(NamedParams<T> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
    for (auto& [name, p] : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  // Checks every gradient before touching any parameter, so a failed step
  // leaves the model unchanged.
  void step() {
    for (auto& [name, p] : params_) {
      auto g = p->grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(static_cast<double>(g[i])))
          throw Error(ErrorKind::numeric, "non-finite gradient in parameter '" + name +
                                              "' at element " + std::to_string(i));
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor<T>& p = *params_[k].second;
      auto g = p.grad();
      if (g.empty()) continue;  // never reached by the loss
      auto w = p.data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  NamedParams<T> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace mlcat
