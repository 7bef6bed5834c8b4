#ifndef SAN_GRADCHECK_HPP
#define SAN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "san/tensor.hpp"

namespace san {

/// Result of comparing tape gradients with central differences.
struct GradCheckResult {
  real max_relative_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  real analytic = 0;
  real numeric = 0;
};

/// Checks d f / d params for a scalar-valued closure that reads `params`.
///
/// Per coordinate the error is |a − n| / max(1e-8, |a| + |n|) with n the
/// central difference (f(x+h) − f(x−h)) / 2h. Parameter values are restored
/// bitwise afterwards; existing gradients are overwritten.
inline GradCheckResult finite_diff_check(const std::function<Tensor()>& f,
                                         std::vector<Tensor> params, real step) {
  if (!(step > 0)) throw ContractError("finite_diff_check: step must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.size() != 1) throw ContractError("finite_diff_check: f must return a scalar");
    if (!std::isfinite(out.item())) throw NumericError("finite_diff_check: non-finite f(x)");
    if (out.requires_grad()) tape.backward(out);
  }

  auto evaluate = [&f]() {
    NoGradScope no_grad;
    const real v = f().item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite f(x ± h)");
    return v;
  };

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const real saved = values[i];
      values[i] = saved + step;
      const real up = evaluate();
      values[i] = saved - step;
      const real down = evaluate();
      values[i] = saved;
      const real numeric = (up - down) / (real(2) * step);
      const real analytic = p.has_grad() ? p.grad()[i] : real(0);
      const real err = std::abs(analytic - numeric) /
                       std::max(real(1e-8), std::abs(analytic) + std::abs(numeric));
      if (err >= result.max_relative_error) result = {err, t, i, analytic, numeric};
    }
  }
  return result;
}

/// Single-input form: f maps x to a scalar.
inline GradCheckResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                         Tensor x, real step) {
  return finite_diff_check([&f, x]() { return f(x); }, std::vector<Tensor>{x}, step);
}

}  // namespace san

#endif  // SAN_GRADCHECK_HPP
