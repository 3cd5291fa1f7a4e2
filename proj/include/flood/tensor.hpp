#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flood {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense float tensor with shared storage. Copies are handles onto the same
/// buffer; use clone() for a deep copy. Constness is shallow, as for a
/// shared_ptr: a const handle still exposes mutable data. Image tensors use
/// N x C x H x W, row-major with the last extent innermost.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<float> data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  // Gradient buffer, allocated zero-filled on first use.
  bool has_grad() const;
  std::span<float> grad() const;
  void zero_grad();
  void drop_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations. Ops append to the tape that is
/// active on the calling thread (see TapeScope) whenever one of their inputs
/// requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> outputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and replays the recorded ops in reverse.
  // Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(Tensor& loss);

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

  static Tape* active() noexcept;

 private:
  struct Node {
    std::vector<Tensor> outputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Makes a tape the recording target for the current thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread while in scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace flood
