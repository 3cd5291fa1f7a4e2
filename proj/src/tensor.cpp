#include "flood/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "flood/errors.hpp"

namespace flood {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (std::size_t extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->data.size(), 0.0f);
  return Tensor(std::move(impl));
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw UsageError("access to an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<float> Tensor::data() const { return impl().data; }

float Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on a tensor of shape " + shape_string(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  impl().requires_grad = flag;
  if (flag && impl().grad.empty()) impl().grad.assign(impl().data.size(), 0.0f);
}

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<float> Tensor::grad() const {
  Impl& im = impl();
  if (im.grad.empty()) im.grad.assign(im.data.size(), 0.0f);
  return im.grad;
}

void Tensor::zero_grad() {
  Impl& im = impl();
  im.grad.assign(im.data.size(), 0.0f);
}

void Tensor::drop_grad() {
  Impl& im = impl();
  im.grad.clear();
  im.grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  const Impl& im = impl();
  return from(im.shape, im.data, im.requires_grad);
}

void Tape::record(std::vector<Tensor> outputs, BackwardFn backward) {
  nodes_.push_back(Node{std::move(outputs), std::move(backward)});
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (Node& node : nodes_) {
    for (Tensor& out : node.outputs) out.zero_grad();
  }
  loss.grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

void Tape::clear() { nodes_.clear(); }

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

}  // namespace flood
