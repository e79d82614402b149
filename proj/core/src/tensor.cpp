#include "labelforge/tensor.hpp"

#include <cmath>
#include <utility>

#include "labelforge/errors.hpp"

namespace labelforge {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw InputError("tensor dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.f) {}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_size(shape_) != data_.size())
    throw InputError("tensor data length does not match shape");
}

Tensor Tensor::scalar(float v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t(std::move(shape));
  for (float& x : t.data_) x = v;
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw InputError("tensor dim index out of range");
  return shape_[i];
}

float& Tensor::at(int a) {
  if (rank() != 1) throw InputError("at(): tensor is not rank 1");
  return data_[static_cast<std::size_t>(a)];
}

float& Tensor::at(int a, int b) {
  if (rank() != 2) throw InputError("at(): tensor is not rank 2");
  return data_[static_cast<std::size_t>(a) * shape_[1] + b];
}

float& Tensor::at(int a, int b, int c) {
  if (rank() != 3) throw InputError("at(): tensor is not rank 3");
  return data_[(static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c];
}

float& Tensor::at(int a, int b, int c, int d) {
  if (rank() != 4) throw InputError("at(): tensor is not rank 4");
  return data_[((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) *
                   shape_[3] +
               d];
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::ensure_grad() {
  if (grad.size() != data_.size()) grad.assign(data_.size(), 0.f);
}

void Tensor::zero_grad() { grad.assign(data_.size(), 0.f); }

}  // namespace labelforge
