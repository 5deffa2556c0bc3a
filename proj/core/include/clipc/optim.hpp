#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "clipc/autograd.hpp"

namespace clipc {

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to
/// final_lr at total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr, double final_lr);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.1;
  std::optional<double> grad_clip;  // global L2 norm
};

struct AdamWState {
  std::int64_t step = 0;
  std::vector<MatrixD> m;
  std::vector<MatrixD> v;
};

/// Adam with decoupled weight decay. Parameters with `decay == false` are
/// not decayed.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Throws std::runtime_error (parameters untouched) on a non-finite gradient.
  void step(std::vector<Parameter>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  AdamWState& state() { return state_; }
  const AdamWState& state() const { return state_; }

 private:
  AdamWConfig config_;
  AdamWState state_;
};

}  // namespace clipc
