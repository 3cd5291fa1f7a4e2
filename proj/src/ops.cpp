#include "flood/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "flood/errors.hpp"
#include "flood/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flood {

namespace {
int g_threads = 1;
}  // namespace

void set_num_threads(int threads) { g_threads = std::max(1, threads); }
int num_threads() { return g_threads; }

}  // namespace flood

namespace flood::ops {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const Tensor& out, const char* op) {
  for (float v : out.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw DimensionError(std::string(op) + " expects an N x C x H x W tensor, got " + shape_string(t.shape()));
  }
}

struct Dims4 {
  std::size_t n, c, h, w;
  explicit Dims4(const Tensor& t) : n(t.dim(0)), c(t.dim(1)), h(t.dim(2)), w(t.dim(3)) {}
  std::size_t plane() const { return h * w; }
};

// Patch-matrix expansion for one sample: col[(c*kh + i)*kw + j][oy*Wo + ox].
void im2col(const float* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, float* col) {
  const long lh = static_cast<long>(h);
  const long lw = static_cast<long>(w);
  for (std::size_t c = 0; c < c_in; ++c) {
    const float* plane = x + c * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        float* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(i);
          float* dst = row + oy * wo;
          if (iy < 0 || iy >= lh) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = plane + iy * lw;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(j);
            dst[ox] = (ix < 0 || ix >= lw) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, float* x) {
  const long lh = static_cast<long>(h);
  const long lw = static_cast<long>(w);
  for (std::size_t c = 0; c < c_in; ++c) {
    float* plane = x + c * h * w;
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const float* row = col + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(i);
          if (iy < 0 || iy >= lh) continue;
          const float* src = row + oy * wo;
          float* dst = plane + iy * lw;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(j);
            if (ix >= 0 && ix < lw) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  require_rank4(input, "conv2d");
  require_rank4(weight, "conv2d weight");
  if (stride < 1) throw DimensionError("conv2d stride must be >= 1");
  if (pad < 0) throw DimensionError("conv2d padding must be >= 0");
  const Dims4 in(input);
  const std::size_t k_out = weight.dim(0);
  const std::size_t kh = weight.dim(2);
  const std::size_t kw = weight.dim(3);
  if (weight.dim(1) != in.c) {
    throw DimensionError("conv2d weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                         std::to_string(in.c));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != k_out)) {
    throw DimensionError("conv2d bias must have shape (" + std::to_string(k_out) + ")");
  }
  const std::size_t padded_h = in.h + 2 * static_cast<std::size_t>(pad);
  const std::size_t padded_w = in.w + 2 * static_cast<std::size_t>(pad);
  if (kh > padded_h || kw > padded_w) throw DimensionError("conv2d kernel exceeds padded input");
  const std::size_t ho = (padded_h - kh) / stride + 1;
  const std::size_t wo = (padded_w - kw) / stride + 1;
  const std::size_t patch = in.c * kh * kw;
  const std::size_t positions = ho * wo;
  // 1x1, stride 1, no padding: the input plane already is the patch matrix.
  const bool direct = kh == 1 && kw == 1 && stride == 1 && pad == 0;

  const bool track = recording({&input, &weight, &bias});
  Tensor out = Tensor::zeros({in.n, k_out, ho, wo}, track);

  const float* xp = input.data().data();
  const float* wp = weight.data().data();
  float* op = out.data().data();
  const float* bp = bias.defined() ? bias.data().data() : nullptr;
  const long batch = static_cast<long>(in.n);

#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (long n = 0; n < batch; ++n) {
    std::vector<float> col;
    const float* colp = xp + n * in.c * in.plane();
    if (!direct) {
      col.resize(patch * positions);
      im2col(colp, in.c, in.h, in.w, kh, kw, stride, pad, ho, wo, col.data());
      colp = col.data();
    }
    MatMap y(op + n * k_out * positions, static_cast<long>(k_out), static_cast<long>(positions));
    y.noalias() = ConstMatMap(wp, static_cast<long>(k_out), static_cast<long>(patch)) *
                  ConstMatMap(colp, static_cast<long>(patch), static_cast<long>(positions));
    if (bp != nullptr) {
      for (std::size_t k = 0; k < k_out; ++k) y.row(static_cast<long>(k)).array() += bp[k];
    }
  }
  check_finite(out, "conv2d");

  if (track) {
    Tape::active()->record({out}, [input, weight, bias, out, stride, pad, in, k_out, kh, kw, ho, wo, patch,
                                   positions, direct]() mutable {
      const float* gy = out.grad().data();
      const float* xp = input.data().data();
      const float* wp = weight.data().data();
      const bool need_dx = input.requires_grad();
      const bool need_dw = weight.requires_grad();
      const bool need_db = bias.defined() && bias.requires_grad();
      float* gx = need_dx ? input.grad().data() : nullptr;
      const long batch = static_cast<long>(in.n);
      // Per-sample partials, reduced below in sample order.
      std::vector<float> dw_part(need_dw ? in.n * k_out * patch : 0);

#pragma omp parallel for schedule(static) num_threads(num_threads())
      for (long n = 0; n < batch; ++n) {
        std::vector<float> col;
        const float* colp = xp + n * in.c * in.plane();
        if (!direct && need_dw) {
          col.resize(patch * positions);
          im2col(colp, in.c, in.h, in.w, kh, kw, stride, pad, ho, wo, col.data());
          colp = col.data();
        }
        ConstMatMap dy(gy + n * k_out * positions, static_cast<long>(k_out), static_cast<long>(positions));
        if (need_dw) {
          MatMap dw(dw_part.data() + n * k_out * patch, static_cast<long>(k_out), static_cast<long>(patch));
          dw.noalias() = dy * ConstMatMap(colp, static_cast<long>(patch), static_cast<long>(positions)).transpose();
        }
        if (need_dx) {
          ConstMatMap wm(wp, static_cast<long>(k_out), static_cast<long>(patch));
          float* gxn = gx + n * in.c * in.plane();
          if (direct) {
            MatMap dx(gxn, static_cast<long>(in.c), static_cast<long>(positions));
            dx.noalias() += wm.transpose() * dy;
          } else {
            std::vector<float> dcol(patch * positions);
            MatMap dc(dcol.data(), static_cast<long>(patch), static_cast<long>(positions));
            dc.noalias() = wm.transpose() * dy;
            col2im(dcol.data(), in.c, in.h, in.w, kh, kw, stride, pad, ho, wo, gxn);
          }
        }
      }

      if (need_dw) {
        float* gw = weight.grad().data();
        for (std::size_t n = 0; n < in.n; ++n) {
          const float* part = dw_part.data() + n * k_out * patch;
          for (std::size_t i = 0; i < k_out * patch; ++i) gw[i] += part[i];
        }
      }
      if (need_db) {
        float* gb = bias.grad().data();
        for (std::size_t n = 0; n < in.n; ++n) {
          for (std::size_t k = 0; k < k_out; ++k) {
            const float* row = gy + (n * k_out + k) * positions;
            float acc = 0.0f;
            for (std::size_t p = 0; p < positions; ++p) acc += row[p];
            gb[k] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor maxpool2(const Tensor& input) {
  require_rank4(input, "maxpool2");
  const Dims4 in(input);
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw DimensionError("maxpool2 needs even spatial extents, got " + shape_string(input.shape()));
  }
  const std::size_t ho = in.h / 2;
  const std::size_t wo = in.w / 2;
  const bool track = recording({&input});
  Tensor out = Tensor::zeros({in.n, in.c, ho, wo}, track);
  std::vector<std::uint32_t> argmax(out.numel());
  const float* x = input.data().data();
  float* y = out.data().data();
  for (std::size_t p = 0; p < in.n * in.c; ++p) {
    const float* plane = x + p * in.plane();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (2 * oy) * in.w + 2 * ox;
        const std::size_t candidates[3] = {best + 1, best + in.w, best + in.w + 1};
        for (std::size_t idx : candidates) {
          if (plane[idx] > plane[best]) best = idx;
        }
        const std::size_t o = p * ho * wo + oy * wo + ox;
        y[o] = plane[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (track) {
    Tape::active()->record({out}, [input, out, argmax = std::move(argmax), in, ho, wo]() mutable {
      if (!input.requires_grad()) return;
      const float* gy = out.grad().data();
      float* gx = input.grad().data();
      const std::size_t per_plane = ho * wo;
      for (std::size_t o = 0; o < argmax.size(); ++o) {
        gx[(o / per_plane) * in.plane() + argmax[o]] += gy[o];
      }
    });
  }
  return out;
}

Tensor avgpool2(const Tensor& input) {
  require_rank4(input, "avgpool2");
  const Dims4 in(input);
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw DimensionError("avgpool2 needs even spatial extents, got " + shape_string(input.shape()));
  }
  const std::size_t ho = in.h / 2;
  const std::size_t wo = in.w / 2;
  const bool track = recording({&input});
  Tensor out = Tensor::zeros({in.n, in.c, ho, wo}, track);
  const float* x = input.data().data();
  float* y = out.data().data();
  for (std::size_t p = 0; p < in.n * in.c; ++p) {
    const float* plane = x + p * in.plane();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t tl = 2 * oy * in.w + 2 * ox;
        y[p * ho * wo + oy * wo + ox] =
            0.25f * ((plane[tl] + plane[tl + 1]) + (plane[tl + in.w] + plane[tl + in.w + 1]));
      }
    }
  }
  if (track) {
    Tape::active()->record({out}, [input, out, in, ho, wo]() mutable {
      if (!input.requires_grad()) return;
      const float* gy = out.grad().data();
      float* gx = input.grad().data();
      for (std::size_t p = 0; p < in.n * in.c; ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const float g = 0.25f * gy[p * ho * wo + oy * wo + ox];
            float* base = gx + p * in.plane() + 2 * oy * in.w + 2 * ox;
            base[0] += g;
            base[1] += g;
            base[in.w] += g;
            base[in.w + 1] += g;
          }
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank4(input, "global_avg_pool");
  const Dims4 in(input);
  const bool track = recording({&input});
  Tensor out = Tensor::zeros({in.n, in.c, 1, 1}, track);
  const float* x = input.data().data();
  float* y = out.data().data();
  for (std::size_t p = 0; p < in.n * in.c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in.plane(); ++i) acc += x[p * in.plane() + i];
    y[p] = static_cast<float>(acc / static_cast<double>(in.plane()));
  }
  if (track) {
    Tape::active()->record({out}, [input, out, in]() mutable {
      if (!input.requires_grad()) return;
      const float* gy = out.grad().data();
      float* gx = input.grad().data();
      const float inv = 1.0f / static_cast<float>(in.plane());
      for (std::size_t p = 0; p < in.n * in.c; ++p) {
        const float g = gy[p] * inv;
        for (std::size_t i = 0; i < in.plane(); ++i) gx[p * in.plane() + i] += g;
      }
    });
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
  require_rank4(input, "upsample_nearest2x");
  const Dims4 in(input);
  const std::size_t ho = in.h * 2;
  const std::size_t wo = in.w * 2;
  const bool track = recording({&input});
  Tensor out = Tensor::zeros({in.n, in.c, ho, wo}, track);
  const float* x = input.data().data();
  float* y = out.data().data();
  for (std::size_t p = 0; p < in.n * in.c; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const float* src = x + p * in.plane() + (oy / 2) * in.w;
      float* dst = y + p * ho * wo + oy * wo;
      for (std::size_t ox = 0; ox < wo; ++ox) dst[ox] = src[ox / 2];
    }
  }
  if (track) {
    Tape::active()->record({out}, [input, out, in, ho, wo]() mutable {
      if (!input.requires_grad()) return;
      const float* gy = out.grad().data();
      float* gx = input.grad().data();
      for (std::size_t p = 0; p < in.n * in.c; ++p) {
        for (std::size_t iy = 0; iy < in.h; ++iy) {
          const float* r0 = gy + p * ho * wo + (2 * iy) * wo;
          const float* r1 = r0 + wo;
          float* dst = gx + p * in.plane() + iy * in.w;
          for (std::size_t ix = 0; ix < in.w; ++ix) {
            dst[ix] += (r0[2 * ix] + r0[2 * ix + 1]) + (r1[2 * ix] + r1[2 * ix + 1]);
          }
        }
      }
    });
  }
  return out;
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, NormMode mode) {
  require_rank4(input, "batchnorm");
  const Dims4 in(input);
  for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)}) {
    if (t->rank() != 1 || t->dim(0) != in.c) {
      throw DimensionError("batchnorm parameter shape " + shape_string(t->shape()) + " does not match " +
                           std::to_string(in.c) + " channels");
    }
  }
  const std::size_t count = in.n * in.plane();
  if (mode == NormMode::train && count <= 1) {
    throw UsageError("batchnorm in train mode needs more than one value per channel");
  }
  const bool track = recording({&input, &gamma, &beta});
  Tensor out = Tensor::zeros(input.shape(), track);
  std::vector<float> xhat(input.numel());
  std::vector<float> inv_std(in.c);
  const float* x = input.data().data();
  float* y = out.data().data();
  const float* g = gamma.data().data();
  const float* b = beta.data().data();
  float* rm = running_mean.data().data();
  float* rv = running_var.data().data();
  const long channels = static_cast<long>(in.c);

#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (long cl = 0; cl < channels; ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    float mu;
    float var;
    if (mode == NormMode::train) {
      double acc = 0.0;
      for (std::size_t n = 0; n < in.n; ++n) {
        const float* plane = x + (n * in.c + c) * in.plane();
        for (std::size_t i = 0; i < in.plane(); ++i) acc += plane[i];
      }
      const double mean = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < in.n; ++n) {
        const float* plane = x + (n * in.c + c) * in.plane();
        for (std::size_t i = 0; i < in.plane(); ++i) {
          const double d = plane[i] - mean;
          sq += d * d;
        }
      }
      const double biased = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      mu = static_cast<float>(mean);
      var = static_cast<float>(biased);
      rm[c] = (1.0f - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * mu;
      rv[c] = (1.0f - kBatchNormMomentum) * rv[c] + kBatchNormMomentum * static_cast<float>(unbiased);
    } else {
      mu = rm[c];
      var = rv[c];
    }
    const float istd = 1.0f / std::sqrt(var + kBatchNormEps);
    inv_std[c] = istd;
    for (std::size_t n = 0; n < in.n; ++n) {
      const std::size_t base = (n * in.c + c) * in.plane();
      for (std::size_t i = 0; i < in.plane(); ++i) {
        const float xh = (x[base + i] - mu) * istd;
        xhat[base + i] = xh;
        y[base + i] = g[c] * xh + b[c];
      }
    }
  }
  check_finite(out, "batchnorm");

  if (track) {
    Tape::active()->record({out}, [input, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std),
                                   in, count, mode]() mutable {
      const float* gy = out.grad().data();
      const float* g = gamma.data().data();
      float* gx = input.requires_grad() ? input.grad().data() : nullptr;
      float* gg = gamma.requires_grad() ? gamma.grad().data() : nullptr;
      float* gb = beta.requires_grad() ? beta.grad().data() : nullptr;
      const long channels = static_cast<long>(in.c);
#pragma omp parallel for schedule(static) num_threads(num_threads())
      for (long cl = 0; cl < channels; ++cl) {
        const auto c = static_cast<std::size_t>(cl);
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < in.n; ++n) {
          const std::size_t base = (n * in.c + c) * in.plane();
          for (std::size_t i = 0; i < in.plane(); ++i) {
            sum_dy += gy[base + i];
            sum_dy_xhat += static_cast<double>(gy[base + i]) * xhat[base + i];
          }
        }
        if (gg != nullptr) gg[c] += static_cast<float>(sum_dy_xhat);
        if (gb != nullptr) gb[c] += static_cast<float>(sum_dy);
        if (gx == nullptr) continue;
        const float scale = g[c] * inv_std[c];
        if (mode == NormMode::eval) {
          for (std::size_t n = 0; n < in.n; ++n) {
            const std::size_t base = (n * in.c + c) * in.plane();
            for (std::size_t i = 0; i < in.plane(); ++i) gx[base + i] += scale * gy[base + i];
          }
          continue;
        }
        const auto m = static_cast<double>(count);
        const auto mean_dy = static_cast<float>(sum_dy / m);
        const auto mean_dy_xhat = static_cast<float>(sum_dy_xhat / m);
        for (std::size_t n = 0; n < in.n; ++n) {
          const std::size_t base = (n * in.c + c) * in.plane();
          for (std::size_t i = 0; i < in.plane(); ++i) {
            gx[base + i] += scale * (gy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor activation(const Tensor& input, Activation kind) {
  const bool track = recording({&input});
  Tensor out = Tensor::zeros(input.shape(), track);
  const float* x = input.data().data();
  float* y = out.data().data();
  const std::size_t count = input.numel();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < count; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  } else {
    // clamp to the open interval (0, 1)
    constexpr float lo = std::numeric_limits<float>::min();
    const float hi = std::nextafter(1.0f, 0.0f);
    for (std::size_t i = 0; i < count; ++i) {
      const float v = x[i];
      float s;
      if (v >= 0.0f) {
        s = 1.0f / (1.0f + std::exp(-v));
      } else {
        const float e = std::exp(v);
        s = e / (1.0f + e);
      }
      y[i] = std::clamp(s, lo, hi);
    }
  }
  check_finite(out, "activation");
  if (track) {
    Tape::active()->record({out}, [input, out, kind, count]() mutable {
      if (!input.requires_grad()) return;
      const float* gy = out.grad().data();
      const float* x = input.data().data();
      const float* y = out.data().data();
      float* gx = input.grad().data();
      if (kind == Activation::relu) {
        for (std::size_t i = 0; i < count; ++i) {
          if (x[i] > 0.0f) gx[i] += gy[i];
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) gx[i] += gy[i] * y[i] * (1.0f - y[i]);
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  // an undefined operand stands for a zero-channel map
  if (!b.defined()) return a;
  if (!a.defined()) return b;
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  const Dims4 da(a);
  const Dims4 db(b);
  if (da.n != db.n || da.h != db.h || da.w != db.w) {
    throw DimensionError("concat_channels needs equal batch and spatial extents, got " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const std::size_t c_out = da.c + db.c;
  const bool track = recording({&a, &b});
  Tensor out = Tensor::zeros({da.n, c_out, da.h, da.w}, track);
  const std::size_t plane = da.plane();
  float* y = out.data().data();
  for (std::size_t n = 0; n < da.n; ++n) {
    std::copy_n(a.data().data() + n * da.c * plane, da.c * plane, y + n * c_out * plane);
    std::copy_n(b.data().data() + n * db.c * plane, db.c * plane, y + (n * c_out + da.c) * plane);
  }
  if (track) {
    Tape::active()->record({out}, [a, b, out, da, db, c_out, plane]() mutable {
      const float* gy = out.grad().data();
      for (std::size_t n = 0; n < da.n; ++n) {
        if (a.requires_grad()) {
          float* ga = a.grad().data() + n * da.c * plane;
          const float* src = gy + n * c_out * plane;
          for (std::size_t i = 0; i < da.c * plane; ++i) ga[i] += src[i];
        }
        if (b.requires_grad()) {
          float* gb = b.grad().data() + n * db.c * plane;
          const float* src = gy + (n * c_out + da.c) * plane;
          for (std::size_t i = 0; i < db.c * plane; ++i) gb[i] += src[i];
        }
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& f, const Tensor& gate) {
  require_rank4(f, "scale_channels");
  require_rank4(gate, "scale_channels gate");
  const Dims4 d(f);
  if (gate.shape() != Shape{d.n, d.c, 1, 1}) {
    throw DimensionError("channel gate shape " + shape_string(gate.shape()) + " does not match " +
                         shape_string(f.shape()));
  }
  const bool track = recording({&f, &gate});
  Tensor out = Tensor::zeros(f.shape(), track);
  const float* x = f.data().data();
  const float* g = gate.data().data();
  float* y = out.data().data();
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    for (std::size_t i = 0; i < d.plane(); ++i) y[p * d.plane() + i] = x[p * d.plane() + i] * g[p];
  }
  if (track) {
    Tape::active()->record({out}, [f, gate, out, d]() mutable {
      const float* gy = out.grad().data();
      const float* x = f.data().data();
      const float* g = gate.data().data();
      float* gf = f.requires_grad() ? f.grad().data() : nullptr;
      float* gg = gate.requires_grad() ? gate.grad().data() : nullptr;
      for (std::size_t p = 0; p < d.n * d.c; ++p) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < d.plane(); ++i) {
          const std::size_t k = p * d.plane() + i;
          if (gf != nullptr) gf[k] += gy[k] * g[p];
          acc += gy[k] * x[k];
        }
        if (gg != nullptr) gg[p] += acc;
      }
    });
  }
  return out;
}

Tensor scale_positions(const Tensor& f, const Tensor& gate) {
  require_rank4(f, "scale_positions");
  require_rank4(gate, "scale_positions gate");
  const Dims4 d(f);
  if (gate.shape() != Shape{d.n, 1, d.h, d.w}) {
    throw DimensionError("spatial gate shape " + shape_string(gate.shape()) + " does not match " +
                         shape_string(f.shape()));
  }
  const bool track = recording({&f, &gate});
  Tensor out = Tensor::zeros(f.shape(), track);
  const float* x = f.data().data();
  const float* g = gate.data().data();
  float* y = out.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t base = (n * d.c + c) * d.plane();
      for (std::size_t i = 0; i < d.plane(); ++i) y[base + i] = x[base + i] * g[n * d.plane() + i];
    }
  }
  if (track) {
    Tape::active()->record({out}, [f, gate, out, d]() mutable {
      const float* gy = out.grad().data();
      const float* x = f.data().data();
      const float* g = gate.data().data();
      float* gf = f.requires_grad() ? f.grad().data() : nullptr;
      float* gg = gate.requires_grad() ? gate.grad().data() : nullptr;
      for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t base = (n * d.c + c) * d.plane();
          for (std::size_t i = 0; i < d.plane(); ++i) {
            if (gf != nullptr) gf[base + i] += gy[base + i] * g[n * d.plane() + i];
            if (gg != nullptr) gg[n * d.plane() + i] += gy[base + i] * x[base + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add needs equal shapes, got " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const bool track = recording({&a, &b});
  Tensor out = Tensor::zeros(a.shape(), track);
  auto y = out.data();
  auto x0 = a.data();
  auto x1 = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] + x1[i];
  check_finite(out, "add");
  if (track) {
    Tape::active()->record({out}, [a, b, out]() mutable {
      auto gy = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul needs equal shapes, got " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const bool track = recording({&a, &b});
  Tensor out = Tensor::zeros(a.shape(), track);
  auto y = out.data();
  auto x0 = a.data();
  auto x1 = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] * x1[i];
  check_finite(out, "mul");
  if (track) {
    Tape::active()->record({out}, [a, b, out]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad();
        auto other = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad();
        auto other = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * other[i];
      }
    });
  }
  return out;
}

namespace {

Tensor reduce(const Tensor& input, bool average) {
  const bool track = recording({&input});
  double acc = 0.0;
  for (float v : input.data()) acc += v;
  const double scale = average ? 1.0 / static_cast<double>(input.numel()) : 1.0;
  Tensor out = Tensor::full({1}, static_cast<float>(acc * scale), track);
  check_finite(out, average ? "mean" : "sum");
  if (track) {
    const auto s = static_cast<float>(scale);
    Tape::active()->record({out}, [input, out, s]() mutable {
      if (!input.requires_grad()) return;
      const float g = out.grad()[0] * s;
      for (float& v : input.grad()) v += g;
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& input) { return reduce(input, false); }
Tensor mean(const Tensor& input) { return reduce(input, true); }

}  // namespace flood::ops
