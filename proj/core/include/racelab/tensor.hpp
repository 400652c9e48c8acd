#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "racelab/common.hpp"

namespace racelab {

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major tensor. Parameters use float (Tensor); activations and
/// gradients use double (TensorD).
template <class T>
struct BasicTensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<std::size_t> s, T fill = T{})
      : shape(std::move(s)), data(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  /// Leading (batch) dimension.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  /// Elements per leading index.
  std::size_t row_size() const { return rows() == 0 ? 0 : data.size() / rows(); }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace racelab
