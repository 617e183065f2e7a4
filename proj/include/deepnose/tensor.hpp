#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "deepnose/common.hpp"

namespace deepnose {

// Dense n-dimensional array, row-major, innermost dimension contiguous.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) { v.assign(numel_of(shape), T(0)); }
  Tensor(std::vector<std::size_t> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != numel_of(shape)) raise(ErrorKind::ShapeMismatch, "tensor data does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t numel() const { return v.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  std::size_t rank() const { return shape.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  void release() {
    std::vector<T>().swap(v);
    shape.clear();
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    raise(ErrorKind::ShapeMismatch,
          std::string(what) + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

}  // namespace deepnose
