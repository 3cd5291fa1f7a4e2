#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "flood/model.hpp"

namespace flood {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// One bias-corrected Adam update, elementwise. `step` counts from 1.
void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v, float lr,
               std::uint64_t step, const AdamConfig& cfg = {});

/// Adam over the trainable entries of a ModelParams, in storage order.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const ModelParams& params, AdamConfig cfg = {});

  void step(ModelParams& params, float lr);

  std::uint64_t steps() const { return step_; }
  void set_steps(std::uint64_t s) { step_ = s; }

  // First and second moments, one per trainable parameter.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

struct PlateauConfig {
  double lr_init = 1e-3;
  double lr_floor = 1e-5;
  double factor = 0.1;
  std::uint32_t patience = 5;
  double min_delta = 1e-6;

  void validate() const;
};

struct SchedulerState {
  float lr = 1e-3f;
  float best = std::numeric_limits<float>::infinity();
  std::uint32_t since_improvement = 0;

  static SchedulerState initial(const PlateauConfig& cfg) { return SchedulerState{static_cast<float>(cfg.lr_init)}; }
  bool operator==(const SchedulerState&) const = default;
};

/// Reduce-on-plateau. An epoch improves when val_loss < best - min_delta;
/// after `patience` epochs without improvement lr becomes
/// max(lr * factor, lr_floor) and the counter resets.
SchedulerState plateau_update(const SchedulerState& state, double val_loss, const PlateauConfig& cfg);

}  // namespace flood
