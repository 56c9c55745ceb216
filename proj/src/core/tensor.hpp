#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core/error.hpp"

namespace anca {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s);

inline size_t checked_numel(const Shape& s) {
  for (int d : s)
    if (d < 0) throw Error(ErrorCode::shape, "negative tensor extent " + shape_str(s));
  return static_cast<size_t>(shape_numel(s));
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Grids are [H,W,c] with channels contiguous.
template <class T>
struct TensorT {
  Shape shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(Shape s) : shape(std::move(s)), data(checked_numel(shape), T(0)) {}
  TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
      throw Error(ErrorCode::shape, "tensor data size does not match shape " + shape_str(shape));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
};

using Tensor = TensorT<float>;

template <class To, class From>
TensorT<To> tensor_cast(const TensorT<From>& x) {
  TensorT<To> out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = static_cast<To>(x.data[i]);
  return out;
}

}  // namespace anca
