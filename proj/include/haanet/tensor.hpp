#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace haanet {

/// NCHW extent of a dense tensor.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major NCHW array with an optional gradient buffer of the same
/// shape. Value semantics; copying a tensor copies data and gradient.
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S(0)) : shape_(shape) {
    check_extent(shape);
    data_.assign(shape.numel(), fill);
  }
  Tensor(Shape shape, std::vector<S> data)
      : shape_(shape), data_(std::move(data)) {
    check_extent(shape);
    if (data_.size() != shape.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<S> data() { return data_; }
  std::span<const S> data() const { return data_; }
  S* raw() { return data_.data(); }
  const S* raw() const { return data_.data(); }

  S& operator[](std::size_t i) { return data_[i]; }
  S operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }
  S& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  S at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<const S> grad() const { return grad_; }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<S> grad_mut() {
    if (grad_.empty()) grad_.assign(data_.size(), S(0));
    return grad_;
  }
  void zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), S(0));
  }
  void clear_grad() { grad_.clear(); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    Tensor<U> t(shape_, std::move(out));
    t.set_requires_grad(requires_grad_);
    return t;
  }

 private:
  static void check_extent(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative extent in shape " + s.str());
    }
  }

  Shape shape_;
  std::vector<S> data_;
  bool requires_grad_ = false;
  std::vector<S> grad_;
};

}  // namespace haanet
