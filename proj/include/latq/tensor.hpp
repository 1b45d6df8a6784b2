#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latq/errors.hpp"

namespace latq {

struct Shape4 {
  int64_t n = 0, h = 0, w = 0, c = 0;

  int64_t elements() const { return n * h * w * c; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ", " + std::to_string(c) + ")";
  }
};

namespace detail {

inline size_t checked_volume(int64_t n, int64_t h, int64_t w, int64_t c) {
  if (n <= 0 || h <= 0 || w <= 0 || c <= 0) {
    throw validation_error("tensor dimensions must be positive, got " +
                           Shape4{n, h, w, c}.str());
  }
  return static_cast<size_t>(n * h * w * c);
}

}  // namespace detail

// Dense rank-4 tensor, row-major with the channel axis fastest.
template <typename T>
struct Tensor4 {
  Shape4 shape;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int64_t n, int64_t h, int64_t w, int64_t c)
      : shape{n, h, w, c}, data(detail::checked_volume(n, h, w, c)) {}

  int64_t flat(int64_t n, int64_t h, int64_t w, int64_t c) const {
    return ((n * shape.h + h) * shape.w + w) * shape.c + c;
  }
  T& at(int64_t n, int64_t h, int64_t w, int64_t c) { return data[flat(n, h, w, c)]; }
  const T& at(int64_t n, int64_t h, int64_t w, int64_t c) const {
    return data[flat(n, h, w, c)];
  }

  bool operator==(const Tensor4&) const = default;
};

using LatentTensor = Tensor4<float>;
using TokenTensor = Tensor4<uint16_t>;

}  // namespace latq
