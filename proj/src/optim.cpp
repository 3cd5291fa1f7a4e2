#include "flood/optim.hpp"

#include <algorithm>
#include <cmath>

#include "flood/errors.hpp"

namespace flood {

void adam_step(std::span<float> param, std::span<const float> grad, std::span<float> m, std::span<float> v, float lr,
               std::uint64_t step, const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adam_step buffers differ in length");
  }
  if (step == 0) throw UsageError("adam_step counts steps from 1");
  const auto t = static_cast<double>(step);
  const auto correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const auto correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g * g;
    const float m_hat = m[i] / correction1;
    const float v_hat = v[i] / correction2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

Adam::Adam(const ModelParams& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    m_.push_back(Tensor::zeros(e.tensor.shape()));
    v_.push_back(Tensor::zeros(e.tensor.shape()));
  }
}

void Adam::step(ModelParams& params, float lr) {
  ++step_;
  std::size_t k = 0;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (k >= m_.size()) throw DimensionError("optimizer state does not match the parameter set");
    adam_step(e.tensor.data(), std::as_const(e.tensor).grad(), m_[k].data(), v_[k].data(), lr, step_, cfg_);
    ++k;
  }
}

void PlateauConfig::validate() const {
  if (!(lr_floor > 0.0 && lr_floor <= lr_init)) throw ValidationError("learning rates need 0 < lr_floor <= lr_init");
  if (!(factor > 0.0 && factor < 1.0)) throw ValidationError("plateau factor must lie in (0, 1)");
  if (patience == 0) throw ValidationError("plateau patience must be >= 1");
}

SchedulerState plateau_update(const SchedulerState& state, double val_loss, const PlateauConfig& cfg) {
  if (!std::isfinite(val_loss)) throw NumericError("validation loss is not finite");
  SchedulerState next = state;
  if (val_loss < static_cast<double>(state.best) - cfg.min_delta) {
    next.best = static_cast<float>(val_loss);
    next.since_improvement = 0;
    return next;
  }
  if (++next.since_improvement < cfg.patience) return next;
  next.since_improvement = 0;
  // next rung of lr_init * factor^k, k recovered from the stored lr
  const double k = std::round(std::log(static_cast<double>(state.lr) / cfg.lr_init) / std::log(cfg.factor)) + 1.0;
  next.lr = static_cast<float>(std::max(cfg.lr_init * std::pow(cfg.factor, k), cfg.lr_floor));
  return next;
}

}  // namespace flood
