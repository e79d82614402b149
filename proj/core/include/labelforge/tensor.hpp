#pragma once

#include <cstddef>
#include <vector>

namespace labelforge {

std::size_t shape_size(const std::vector<int>& shape);

// Dense row-major float32 tensor. Doubles as an autograd parameter: when
// requires_grad is set, backward passes accumulate into grad, which always
// matches data length once allocated.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<float> values);

  static Tensor scalar(float v);
  static Tensor full(std::vector<int> shape, float v);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(int a);
  float& at(int a, int b);
  float& at(int a, int b, int c);
  float& at(int a, int b, int c, int d);
  float at(int a) const { return const_cast<Tensor*>(this)->at(a); }
  float at(int a, int b) const { return const_cast<Tensor*>(this)->at(a, b); }
  float at(int a, int b, int c) const {
    return const_cast<Tensor*>(this)->at(a, b, c);
  }
  float at(int a, int b, int c, int d) const {
    return const_cast<Tensor*>(this)->at(a, b, c, d);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  bool requires_grad = false;
  std::vector<float> grad;

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

}  // namespace labelforge
