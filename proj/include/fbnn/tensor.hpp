#pragma once

#include <vector>

#include "fbnn/bittensor.hpp"
#include "fbnn/core.hpp"

namespace fbnn {

// Dense real-valued tensor (f64), row-major.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), 0.0) {}
  Tensor(Shape s, double fill) : shape(std::move(s)), v(shape_numel(shape), fill) {}

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  double& operator[](int64_t i) { return v[i]; }
  double operator[](int64_t i) const { return v[i]; }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

inline BitTensor sign_forward(const Tensor& x) {
  return BitTensor::pack<double>(x.shape, std::span<const double>(x.v));
}

// Converts a ±1 bit tensor to its real view (used on the training path).
inline Tensor to_real(const BitTensor& b) {
  Tensor t(b.shape());
  for (int64_t i = 0; i < t.size(); ++i) t.v[i] = b.get(i);
  return t;
}

}  // namespace fbnn
