#ifndef SAN_DROPOUT_HPP
#define SAN_DROPOUT_HPP

#include <random>

#include "san/ops.hpp"
#include "san/params.hpp"

namespace san {

enum class Mode { train, eval };

/// Inverted dropout: in train mode each coordinate is zeroed with probability
/// `rate` and survivors are scaled by 1/(1 − rate); eval mode is the identity.
inline Tensor dropout(const Tensor& x, real rate, Mode mode, Rng& rng) {
  if (!(rate >= 0) || rate >= 1) {
    throw ContractError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::eval || rate == 0) return x;
  std::uniform_real_distribution<real> coin(0, 1);
  const real keep_scale = real(1) / (real(1) - rate);
  std::vector<real> mask(x.size());
  for (auto& m : mask) m = coin(rng) < rate ? real(0) : keep_scale;
  return ops::mul(x, Tensor(x.shape(), std::move(mask)));
}

}  // namespace san

#endif  // SAN_DROPOUT_HPP
