#include "haanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace haanet {
namespace {

double evaluate(const ScalarFn& f) {
  Tape<double> tape;
  const Var<double> root = f(tape);
  if (root.shape() != Shape{1, 1, 1, 1}) {
    throw TapeError("gradient check target must be scalar, got " +
                    root.shape().str());
  }
  return root.value()[0];
}

}  // namespace

double finite_diff_check_param(const ScalarFn& f, Tensor<double>& param,
                               double step, std::size_t max_elements) {
  if (!(step >= 1e-7 && step <= 1e-4)) {
    throw std::invalid_argument("finite-difference step must lie in [1e-7, 1e-4]");
  }
  const bool had_grad_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.clear_grad();
  {
    Tape<double> tape;
    const Var<double> root = f(tape);
    if (!std::isfinite(root.value()[0])) {
      throw NonFiniteError("non-finite objective at the base point", 0);
    }
    tape.backward(root);
  }
  std::vector<double> analytic(param.size(), 0.0);
  if (param.has_grad()) {
    const auto g = param.grad();
    std::copy(g.begin(), g.end(), analytic.begin());
  }

  const std::size_t total = param.size();
  const std::size_t stride =
      (max_elements > 0 && total > max_elements) ? total / max_elements : 1;
  double worst = 0.0;
  for (std::size_t i = 0; i < total; i += stride) {
    if (!std::isfinite(analytic[i])) {
      throw NonFiniteError("non-finite analytic gradient", i);
    }
    const double orig = param[i];
    param[i] = orig + step;
    const double plus = evaluate(f);
    param[i] = orig - step;
    const double minus = evaluate(f);
    param[i] = orig;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NonFiniteError("non-finite objective under perturbation", i);
    }
    const double numeric = (plus - minus) / (2.0 * step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  param.clear_grad();
  param.set_requires_grad(had_grad_flag);
  return worst;
}

double finite_diff_check(const InputFn& f, const Tensor<double>& x,
                         double step) {
  Tensor<double> input = x;
  return finite_diff_check_param(
      [&](Tape<double>& tape) { return f(tape, tape.leaf(input)); }, input,
      step);
}

}  // namespace haanet
