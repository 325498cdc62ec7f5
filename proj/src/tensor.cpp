// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace afiu {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw std::invalid_argument("tensor of shape " + shape_to_string(shape_) + " given " +
                                std::to_string(data_.size()) + " values");
  }
}

template <typename T>
int64_t Tensor<T>::dim(int64_t axis) const {
  if (axis < 0 || axis >= rank()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  }
  return shape_[static_cast<size_t>(axis)];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
void require_feature_map(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(what) + ": expected a 4-D feature map, got shape " +
                                shape_to_string(t.shape()));
  }
  for (int64_t d : t.shape()) {
    if (d < 1) {
      throw std::invalid_argument(std::string(what) + ": empty feature map " + shape_to_string(t.shape()));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void require_feature_map(const Tensor<float>&, const char*);
template void require_feature_map(const Tensor<double>&, const char*);

}  // namespace afiu
