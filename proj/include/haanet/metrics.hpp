#pragma once

#include "haanet/tensor.hpp"

namespace haanet {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all elements, capped at 100 dB when MSE < 1e-10.
template <typename S>
double psnr(const Tensor<S>& pred, const Tensor<S>& target);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 1e-4,
/// C2 = 9e-4, averaged over channels and fully-covered window positions.
template <typename S>
double ssim(const Tensor<S>& pred, const Tensor<S>& target);

}  // namespace haanet
