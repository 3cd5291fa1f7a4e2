#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flood/ops.hpp"
#include "flood/tensor.hpp"

namespace flood::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f,
                            bool requires_grad = false) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

// Values spaced at least `gap` apart, randomly permuted and signed, so that
// max-pool winners and relu signs survive a finite-difference step.
inline Tensor separated_tensor(const Shape& shape, std::mt19937_64& rng, float gap = 0.05f,
                               bool requires_grad = false) {
  const std::size_t n = shape_numel(shape);
  std::vector<float> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (static_cast<float>(i) - static_cast<float>(n) / 2.0f + 0.5f) * gap;
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor::from(shape, std::move(v), requires_grad);
}

struct GradReport {
  double rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

using Forward = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares tape gradients of L = sum(f(inputs) * R), R a fixed random
// projection, against central differences for every input that requires a
// gradient. Error is ||analytic - numeric|| / max(||analytic||, ||numeric||).
// With skip_kinks, coordinates whose one-sided quotients disagree by more than
// 5% (a relu or max-pool switch inside the step) are counted, not compared.
inline GradReport check_gradients(const Forward& f, const std::vector<Tensor>& inputs, std::uint64_t seed,
                                  double h = 1e-3, bool skip_kinks = false) {
  Tensor probe;
  {
    NoGradScope off;
    probe = f(inputs);
  }
  std::mt19937_64 rng(seed);
  const Tensor proj = random_tensor(probe.shape(), rng, 0.5f, 1.5f);

  auto objective = [&]() {
    NoGradScope off;
    const Tensor out = f(inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(out.data()[i]) * proj.data()[i];
    return acc;
  };

  for (const Tensor& t : inputs) {
    if (t.requires_grad()) const_cast<Tensor&>(t).zero_grad();
  }
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::mul(f(inputs), proj));
  }
  tape.backward(loss);

  double diff2 = 0.0;
  double ana2 = 0.0;
  double num2 = 0.0;
  GradReport report;
  const double centre = skip_kinks ? objective() : 0.0;
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    auto x = t.data();
    auto g = t.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float saved = x[i];
      x[i] = saved + static_cast<float>(h);
      const double up = objective();
      x[i] = saved - static_cast<float>(h);
      const double down = objective();
      x[i] = saved;
      if (skip_kinks) {
        const double fwd = (up - centre) / h;
        const double bwd = (centre - down) / h;
        if (std::abs(fwd - bwd) > 0.05 * std::max(std::abs(fwd), std::abs(bwd)) + 1e-2) {
          ++report.kinks;
          continue;
        }
      }
      const double step = static_cast<double>(saved + static_cast<float>(h)) - static_cast<double>(saved - static_cast<float>(h));
      const double numeric = (up - down) / step;
      const double analytic = g[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      ana2 += analytic * analytic;
      num2 += numeric * numeric;
      ++report.checked;
    }
  }
  const double scale = std::max({std::sqrt(ana2), std::sqrt(num2), 1e-12});
  report.rel_err = std::sqrt(diff2) / scale;
  return report;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("floodnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace flood::testing
