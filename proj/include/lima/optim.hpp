#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lima/common.hpp"

namespace lima {

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamWHyper {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;  // number of completed updates

  explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One AdamW update over a parameter slice. `lr_scale` multiplies the
/// learning rate for this slice only (used for the head group).
inline void adamw_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> m, std::span<double> v,
                       std::uint64_t step, const AdamWHyper& hyper,
                       double lr_scale = 1.0) {
  if (params.size() != grads.size() || params.size() != m.size() ||
      params.size() != v.size())
    throw InvalidInputError("adamw_step: size mismatch");
  for (double g : grads)
    if (!std::isfinite(g))
      throw NumericError("adamw_step: non-finite gradient");

  const double lr = hyper.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(hyper.beta1, double(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, double(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grads[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + hyper.epsilon) +
                       hyper.weight_decay * params[i]);
  }
}

// ---------------------------------------------------------------------------
// OneCycle schedule
// ---------------------------------------------------------------------------

inline constexpr double kOneCycleWarmupFraction = 0.3;
inline constexpr double kOneCycleStartDiv = 25.0;
inline constexpr double kOneCycleFinalDiv = 1e4;

/// Linear warmup from base_lr/25 to base_lr over the first 30% of steps,
/// then cosine annealing down to base_lr/1e4.
inline double onecycle_lr(std::uint64_t step, std::uint64_t total_steps,
                          double base_lr,
                          double warmup_frac = kOneCycleWarmupFraction) {
  if (total_steps == 0) return base_lr;
  const double warm_steps = warmup_frac * double(total_steps);
  const double start_lr = base_lr / kOneCycleStartDiv;
  const double final_lr = base_lr / kOneCycleFinalDiv;
  const double s = double(step);
  if (s < warm_steps) {
    const double t = warm_steps > 0.0 ? s / warm_steps : 1.0;
    return start_lr + (base_lr - start_lr) * t;
  }
  const double span = double(total_steps) - warm_steps;
  const double t = span > 0.0 ? (s - warm_steps) / span : 1.0;
  const double clamped = t > 1.0 ? 1.0 : t;
  return final_lr +
         0.5 * (base_lr - final_lr) * (1.0 + std::cos(3.14159265358979312 * clamped));
}

}  // namespace lima
