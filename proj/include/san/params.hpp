#ifndef SAN_PARAMS_HPP
#define SAN_PARAMS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "san/tensor.hpp"

namespace san {

using Rng = std::mt19937_64;

/// A learnable tensor with a stable, checkpoint-visible name.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); shape rows×cols
/// where rows is fan_out.
inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const real a = std::sqrt(real(6) / static_cast<real>(rows + cols));
  std::uniform_real_distribution<real> dist(-a, a);
  std::vector<real> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor({rows, cols}, std::move(v), true);
}

inline Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

inline Tensor constant_param(Shape shape, real value) {
  Tensor t = Tensor::filled(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

inline void zero_grads(const ParamList& params) {
  for (auto p : params) p.tensor.zero_grad();
}

}  // namespace san

#endif  // SAN_PARAMS_HPP
