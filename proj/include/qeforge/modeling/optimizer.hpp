#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "qeforge/error.hpp"
#include "qeforge/modeling/encoder.hpp"

namespace qeforge::modeling {

struct OptimizerConfig {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  /// Gradients are rescaled so their global L2 norm is at most this; 0 disables.
  double clip_norm = 1.0;

  void validate() const {
    if (!(lr > 0)) throw ValidationError("optimizer lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw ValidationError("optimizer betas must lie in [0, 1)");
    if (!(eps > 0)) throw ValidationError("optimizer eps must be positive");
    if (weight_decay < 0 || clip_norm < 0)
      throw ValidationError("optimizer weight_decay and clip_norm must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimizerConfig, lr, beta1, beta2, eps,
                                                weight_decay, clip_norm)

/// Adam with decoupled weight decay. Bias groups (names ending in "bias")
/// are not decayed. State is keyed by group position, so the group layout
/// must stay fixed for the optimizer's lifetime.
class AdamW {
 public:
  explicit AdamW(OptimizerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const { return cfg_; }
  long long steps() const { return t_; }

  void step(const std::vector<ParamGroup>& groups) {
    if (m_.empty()) {
      for (const auto& g : groups) {
        m_.emplace_back(g.value.size(), 0.0);
        v_.emplace_back(g.value.size(), 0.0);
      }
    }
    if (m_.size() != groups.size()) throw Error("optimizer parameter layout changed");
    double scale = 1.0;
    if (cfg_.clip_norm > 0) {
      double sq = 0.0;
      for (const auto& g : groups)
        for (double x : g.grad) sq += x * x;
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& g = groups[gi];
      if (m_[gi].size() != g.value.size()) throw Error("optimizer parameter layout changed");
      const bool decay = !g.name.ends_with("bias");
      auto& m = m_[gi];
      auto& v = v_[gi];
      for (std::size_t i = 0; i < g.value.size(); ++i) {
        const double grad = g.grad[i] * scale;
        if (grad == 0.0 && m[i] == 0.0 && v[i] == 0.0 && !decay) continue;
        m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * grad;
        v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * grad * grad;
        if (decay) g.value[i] -= cfg_.lr * cfg_.weight_decay * g.value[i];
        g.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace qeforge::modeling
