#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace slagflow {

template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s)
      : shape(std::move(s)),
        data(static_cast<size_t>(std::accumulate(shape.begin(), shape.end(),
                                                 int64_t{1}, std::multiplies<>()))) {}

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  size_t rank() const { return shape.size(); }
  int64_t dim(size_t i) const { return shape[i]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator()(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator()(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& operator()(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const T& operator()(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * shape[1] + j)];
  }
  T& operator()(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const T& operator()(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

}  // namespace slagflow
