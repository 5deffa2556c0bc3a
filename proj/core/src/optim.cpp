#include "clipc/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace clipc {

double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr, double final_lr) {
  if (warmup_steps < 0 || warmup_steps >= total_steps) throw std::invalid_argument("lr_at: need 0 <= warmup < total");
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_at: step outside [0, total_steps]");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (step == total_steps) return final_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(std::vector<Parameter>& params, double lr) {
  if (state_.m.size() != params.size()) {
    state_.m.clear();
    state_.v.clear();
    for (const auto& p : params) {
      state_.m.push_back(MatrixD::Zero(p.value.rows(), p.value.cols()));
      state_.v.push_back(MatrixD::Zero(p.value.rows(), p.value.cols()));
    }
  }
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.grad.allFinite()) throw std::runtime_error("non-finite gradient in parameter " + p.name);
    sq += p.grad.squaredNorm();
  }
  double clip_scale = 1.0;
  if (config_.grad_clip && std::sqrt(sq) > *config_.grad_clip) clip_scale = *config_.grad_clip / std::sqrt(sq);

  ++state_.step;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(state_.step));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(state_.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    const auto g = (p.grad * clip_scale).array();
    m.array() = config_.beta1 * m.array() + (1.0 - config_.beta1) * g;
    v.array() = config_.beta2 * v.array() + (1.0 - config_.beta2) * g.square();
    if (p.decay && config_.weight_decay != 0.0) p.value -= (lr * config_.weight_decay) * p.value;
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  }
}

}  // namespace clipc
