#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "haanet/autograd.hpp"
#include "haanet/ops.hpp"
#include "haanet/params.hpp"

namespace haanet {

/// Squeeze-expand pair N -> N/8 -> N of 1x1 convolutions.
template <typename S>
struct Bottleneck {
  Conv2d<S> reduce;
  Conv2d<S> expand;
};

/// Parameters of the haze-aware attention module at channel width N.
/// The transmission and reciprocal branches share an architecture but not
/// parameters.
template <typename S>
struct HaamWeights {
  int channels = 0;
  Bottleneck<S> airlight;
  Conv2d<S> trans_features;
  Bottleneck<S> trans_proj;
  Conv2d<S> recip_features;
  Bottleneck<S> recip_proj;

  static constexpr int kReduction = 8;

  static HaamWeights init(int channels, std::uint64_t seed);
  static HaamWeights zeros(int channels);

  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
  std::size_t parameter_count();
};

/// Overrides for branch outputs. Injected airlight is (n,N,1,1); injected
/// transmission and reciprocal maps are (n,N,h,w).
template <typename S>
struct HaamInjection {
  std::optional<Tensor<S>> airlight;
  std::optional<Tensor<S>> transmission;
  std::optional<Tensor<S>> recip;
};

/// A = sigmoid(expand(relu(reduce(GAP(x))))), shape (n,N,1,1).
template <typename S>
Var<S> estimate_airlight(const Var<S>& x, HaamWeights<S>& w);

/// T = sigmoid(expand(relu(reduce(conv3x3(x))))), shape of x.
template <typename S>
Var<S> estimate_transmission(const Var<S>& x, HaamWeights<S>& w);

/// T', the learned stand-in for 1/T; same form as T with its own parameters.
template <typename S>
Var<S> estimate_transmission_recip(const Var<S>& x, HaamWeights<S>& w);

/// j = (x - A (1 - T)) T': removes the airlight term, then undoes the
/// attenuation with the learned reciprocal.
template <typename S>
Var<S> haam_forward(const Var<S>& x, HaamWeights<S>& w,
                    const HaamInjection<S>* inject = nullptr);

}  // namespace haanet
