#pragma once

#include <cmath>
#include <cstdint>

#include "haanet/autograd.hpp"
#include "haanet/rng.hpp"
#include "haanet/tensor.hpp"

namespace testing {

template <typename S = double>
haanet::Tensor<S> random_tensor(const haanet::Shape& s, std::uint64_t seed,
                                double lo = -1.0, double hi = 1.0) {
  haanet::Rng rng(seed);
  haanet::Tensor<S> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
double max_abs_diff(const haanet::Tensor<S>& a, const haanet::Tensor<S>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

template <typename S>
bool bit_equal(const haanet::Tensor<S>& a, const haanet::Tensor<S>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace testing
