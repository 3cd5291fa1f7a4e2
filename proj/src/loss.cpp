#include "flood/loss.hpp"

#include <algorithm>
#include <cmath>

#include "flood/errors.hpp"

namespace flood {

namespace {

struct Inputs {
  const float* p;
  const float* g;
  const float* m;
  std::size_t n;
};

Inputs unpack(const Tensor& probs, const Tensor& target, const Tensor& mask) {
  if (probs.shape() != target.shape() || probs.shape() != mask.shape()) {
    throw DimensionError("loss inputs differ in shape: " + shape_string(probs.shape()) + ", " +
                         shape_string(target.shape()) + ", " + shape_string(mask.shape()));
  }
  return Inputs{probs.data().data(), target.data().data(), mask.data().data(), probs.numel()};
}

std::size_t valid_count(const Inputs& in) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < in.n; ++i) n += in.m[i] != 0.0f ? 1 : 0;
  return n;
}

struct DiceSums {
  double inter = 0.0;
  double pred = 0.0;
  double truth = 0.0;
};

DiceSums dice_sums(const Inputs& in) {
  DiceSums s;
  for (std::size_t i = 0; i < in.n; ++i) {
    if (in.m[i] == 0.0f) continue;
    s.inter += static_cast<double>(in.p[i]) * in.g[i];
    s.pred += in.p[i];
    s.truth += in.g[i];
  }
  return s;
}

double dice_value(const DiceSums& s, double smooth) {
  return 1.0 - (2.0 * s.inter + smooth) / (s.pred + s.truth + smooth);
}

void dice_grad(const Inputs& in, const DiceSums& s, double smooth, double scale, float* gp) {
  const double num = 2.0 * s.inter + smooth;
  const double den = s.pred + s.truth + smooth;
  const double den2 = den * den;
  for (std::size_t i = 0; i < in.n; ++i) {
    if (in.m[i] == 0.0f) continue;
    const double d = -(2.0 * in.g[i] * den - num) / den2;
    gp[i] += static_cast<float>(scale * d);
  }
}

double clamp_prob(float p) {
  return std::clamp(static_cast<double>(p), static_cast<double>(kProbClamp), 1.0 - static_cast<double>(kProbClamp));
}

double focal_value(const Inputs& in, double gamma, std::size_t valid) {
  double acc = 0.0;
  for (std::size_t i = 0; i < in.n; ++i) {
    if (in.m[i] == 0.0f) continue;
    const double p = clamp_prob(in.p[i]);
    const double pt = in.g[i] != 0.0f ? p : 1.0 - p;
    acc += -std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return acc / static_cast<double>(valid);
}

void focal_grad(const Inputs& in, double gamma, std::size_t valid, double scale, float* gp) {
  const double inv = scale / static_cast<double>(valid);
  const double lo = kProbClamp;
  const double hi = 1.0 - static_cast<double>(kProbClamp);
  for (std::size_t i = 0; i < in.n; ++i) {
    if (in.m[i] == 0.0f) continue;
    const double raw = in.p[i];
    if (raw < lo || raw > hi) continue;  // clamped: flat
    const bool positive = in.g[i] != 0.0f;
    const double pt = positive ? raw : 1.0 - raw;
    const double q = 1.0 - pt;
    double d_pt = -std::pow(q, gamma) / pt;
    if (gamma != 0.0) d_pt += gamma * std::pow(q, gamma - 1.0) * std::log(pt);
    gp[i] += static_cast<float>(inv * (positive ? d_pt : -d_pt));
  }
}

bool track(const Tensor& probs) { return Tape::active() != nullptr && probs.requires_grad(); }

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0f && alpha <= 1.0f)) throw ValidationError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (!(gamma >= 0.0f)) throw ValidationError("focal gamma must be >= 0, got " + std::to_string(gamma));
  if (!(smooth > 0.0f)) throw ValidationError("dice smoothing must be > 0, got " + std::to_string(smooth));
}

LossValue dice_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, float smooth) {
  const Inputs in = unpack(probs, target, mask);
  if (valid_count(in) == 0) return {Tensor::zeros({1}), true};
  const DiceSums sums = dice_sums(in);
  const bool rec = track(probs);
  Tensor out = Tensor::full({1}, static_cast<float>(dice_value(sums, smooth)), rec);
  if (rec) {
    Tape::active()->record({out}, [probs, target, mask, out, sums, smooth]() mutable {
      dice_grad(unpack(probs, target, mask), sums, smooth, out.grad()[0], probs.grad().data());
    });
  }
  return {out, false};
}

LossValue focal_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, float gamma) {
  const Inputs in = unpack(probs, target, mask);
  const std::size_t valid = valid_count(in);
  if (valid == 0) return {Tensor::zeros({1}), true};
  const bool rec = track(probs);
  Tensor out = Tensor::full({1}, static_cast<float>(focal_value(in, gamma, valid)), rec);
  if (rec) {
    Tape::active()->record({out}, [probs, target, mask, out, gamma, valid]() mutable {
      focal_grad(unpack(probs, target, mask), gamma, valid, out.grad()[0], probs.grad().data());
    });
  }
  return {out, false};
}

LossValue combined_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, const LossConfig& cfg) {
  cfg.validate();
  const Inputs in = unpack(probs, target, mask);
  const std::size_t valid = valid_count(in);
  if (valid == 0) return {Tensor::zeros({1}), true};
  const DiceSums sums = dice_sums(in);
  const auto dice = static_cast<float>(dice_value(sums, cfg.smooth));
  const auto focal = static_cast<float>(focal_value(in, cfg.gamma, valid));
  const bool rec = track(probs);
  Tensor out = Tensor::full({1}, cfg.alpha * dice + (1.0f - cfg.alpha) * focal, rec);
  if (!std::isfinite(out.item())) throw NumericError("combined loss is not finite");
  if (rec) {
    Tape::active()->record({out}, [probs, target, mask, out, sums, valid, cfg]() mutable {
      const Inputs in = unpack(probs, target, mask);
      const double g = out.grad()[0];
      float* gp = probs.grad().data();
      if (cfg.alpha != 0.0f) dice_grad(in, sums, cfg.smooth, g * cfg.alpha, gp);
      if (cfg.alpha != 1.0f) focal_grad(in, cfg.gamma, valid, g * (1.0 - cfg.alpha), gp);
    });
  }
  return {out, false};
}

}  // namespace flood
