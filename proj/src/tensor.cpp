#include "subln/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "subln/errors.hpp"

namespace subln {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from(Shape{1}, {value}, requires_grad); }

std::size_t Tensor::rows() const { return rank() == 0 ? 1 : shape().front(); }

std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape().back(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor Tape::record(std::string op, const std::vector<Tensor>& inputs, Shape shape, std::vector<double> values,
                    BackwardFn fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  if (!recording_) return out;
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.tape() != nullptr && in.tape() != this) {
      throw ContractError(op + ": input was produced on a different tape");
    }
    needs_grad = needs_grad || in.requires_grad();
  }
  if (!needs_grad) return out;
  out.impl_->requires_grad = true;
  out.impl_->tape = this;
  entries_.push_back(Entry{std::move(op), out, std::move(fn)});
  return out;
}

void Tape::accumulate(Tensor target, std::span<const double> contribution) {
  if (!target.requires_grad()) return;
  auto grad = target.mutable_grad();
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += contribution[i];
}

void Tape::accumulate(Tensor target, std::size_t index, double contribution) {
  if (!target.requires_grad()) return;
  target.mutable_grad()[index] += contribution;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  const bool is_leaf = loss.tape() == nullptr && loss.requires_grad();
  if (loss.tape() != this && !is_leaf) throw ContractError("backward(): loss is not on this tape");

  for (auto& entry : entries_) {
    auto& grad = entry.output.impl_->grad;
    grad.assign(entry.output.numel(), 0.0);
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& out_grad = it->output.impl_->grad;
    if (std::all_of(out_grad.begin(), out_grad.end(), [](double g) { return g == 0.0; })) continue;
    it->fn(out_grad);
  }
}

}  // namespace subln
