#pragma once

#include <array>
#include <cstdint>

#include "haanet/autograd.hpp"
#include "haanet/ops.hpp"

namespace haanet {

/// Mean absolute error; zero subgradient at ties.
template <typename S>
Var<S> l1_loss(const Var<S>& pred, const Var<S>& target);

/// Frozen feature pyramid for contrastive regularization: three seeded
/// stride-2 3x3 conv + ReLU stages, 3 -> 16 -> 32 -> 64 channels. Stands in
/// for pretrained VGG features.
template <typename S>
struct CrExtractor {
  std::uint64_t seed = 0;
  std::array<Conv2d<S>, 3> stages;
  static constexpr std::array<double, 3> kStageWeights = {1.0 / 8, 1.0 / 4,
                                                          1.0 / 2};
  static constexpr double kEpsilon = 1e-7;

  static CrExtractor make(std::uint64_t seed);
  std::array<Var<S>, 3> features(const Var<S>& image);
};

/// sum_i w_i * L1(f_i(pred), f_i(gt)) / (L1(f_i(pred), f_i(hazy)) + eps).
/// gt and hazy enter as constants.
template <typename S>
Var<S> cr_loss(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& hazy,
               CrExtractor<S>& ext);

/// lambda * cr_loss + l1_loss.
template <typename S>
Var<S> total_loss(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& hazy,
                  double lambda, CrExtractor<S>& ext);

}  // namespace haanet
