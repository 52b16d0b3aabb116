#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "haanet/autograd.hpp"

namespace haanet {

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (element " + std::to_string(index) + ")"),
        index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Builds a scalar on the given tape from a recorded input.
using InputFn = std::function<Var<double>(Tape<double>&, const Var<double>&)>;
/// Builds a scalar on the given tape; parameters are registered internally.
using ScalarFn = std::function<Var<double>(Tape<double>&)>;

/// Max over elements of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8), with g_fd
/// from central differences of width `step` (in [1e-7, 1e-4]).
double finite_diff_check(const InputFn& f, const Tensor<double>& x,
                         double step = 1e-6);

/// Same check for a tensor `param` that `f` reads through Tape::leaf.
/// `max_elements` > 0 checks an evenly strided subset.
double finite_diff_check_param(const ScalarFn& f, Tensor<double>& param,
                               double step = 1e-6,
                               std::size_t max_elements = 0);

}  // namespace haanet
