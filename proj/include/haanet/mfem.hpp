#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "haanet/autograd.hpp"
#include "haanet/ops.hpp"
#include "haanet/params.hpp"

namespace haanet {

/// Receptive fields of the decoupler, in modulation order. 0 denotes the
/// global window.
inline constexpr std::array<int, 4> kMfemScales = {0, 3, 5, 7};

std::string mfem_scale_name(std::size_t index);

/// Per-channel modulation vectors, each shaped (1,N,1,1). Initialized so the
/// module is the identity: gains 1, channel weights 0.25.
template <typename S>
struct MfemWeights {
  int channels = 0;
  std::array<Tensor<S>, 4> low_gain;
  std::array<Tensor<S>, 4> high_gain;
  std::array<Tensor<S>, 4> channel_weight;

  static MfemWeights init(int channels);

  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
  std::size_t parameter_count();
};

/// Low/high sub-bands per scale; low[k] + high[k] == x.
template <typename S>
struct SubBands {
  std::array<Var<S>, 4> low;
  std::array<Var<S>, 4> high;
};

template <typename S>
SubBands<S> decouple(const Var<S>& x);

/// y = sum_k W_k * (Ml_k * low_k + Mh_k * high_k), per channel.
template <typename S>
Var<S> modulate(const SubBands<S>& bands, MfemWeights<S>& w);

template <typename S>
Var<S> mfem_forward(const Var<S>& x, MfemWeights<S>& w);

}  // namespace haanet
