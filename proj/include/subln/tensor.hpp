#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace subln {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient accumulation.
  std::vector<double> grad;
  bool requires_grad = false;
  // Set when the tensor is the output of an operation recorded on `tape`.
  const Tape* tape = nullptr;
};

}  // namespace detail

// Dense row-major array of doubles with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage. Use clone() for a
// deep copy. Data is only mutated through mutable_data(), which parameter
// initialization and SGD use; operations never write into their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Leading extent of a matrix.
  std::size_t rows() const;
  // Trailing extent.
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t row, std::size_t col) const { return impl_->data[row * cols() + col]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const Tape* tape() const { return impl_->tape; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

bool all_finite(const Tensor& t);

// Linear record of executed primitives. Entries are appended in execution
// order, so every entry's inputs were produced earlier on the same tape or are
// leaves; backward() replays them in reverse.
//
// Intermediate gradients are scratch and reset on every backward() call; leaf
// gradients accumulate until zero_grad().
class Tape {
 public:
  // Receives d(loss)/d(output) and must push contributions into the inputs
  // through Tape::accumulate.
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  const std::string& op_name(std::size_t i) const { return entries_.at(i).op; }

  // Creates the output tensor of an operation. When any input requires a
  // gradient and the tape is recording, the output joins the tape and `fn`
  // is stored for the reverse pass.
  Tensor record(std::string op, const std::vector<Tensor>& inputs, Shape shape,
                std::vector<double> values, BackwardFn fn);

  void backward(const Tensor& loss);

  static void accumulate(Tensor target, std::span<const double> contribution);
  static void accumulate(Tensor target, std::size_t index, double contribution);

 private:
  struct Entry {
    std::string op;
    Tensor output;
    BackwardFn fn;
  };

  bool recording_;
  std::vector<Entry> entries_;
};

}  // namespace subln
