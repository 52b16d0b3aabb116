#pragma once

#include <array>
#include <cstdint>

#include "haanet/tensor.hpp"

namespace haanet {

/// Per-colour-channel atmospheric light, spatially uniform.
using Airlight = std::array<double, 3>;

/// Generative record of one hazy scene. Images are (1,3,h,w) in [0,1]; depth
/// is (1,1,h,w), dimensionless and non-negative.
template <typename S>
struct SceneSpec {
  Tensor<S> clean;
  Tensor<S> depth;
  double beta = 1.0;
  Airlight airlight{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename S>
struct HazyPair {
  Tensor<S> hazy;
  Tensor<S> clean;
  Tensor<S> transmission;
  Airlight airlight{};
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultTransmissionFloor = 0.05;

/// t = exp(-beta * d). Rejects negative depth and non-positive beta.
template <typename S>
Tensor<S> transmission(const Tensor<S>& depth, double beta);

/// I = J * t + A * (1 - t), with t broadcast over colour channels.
template <typename S>
Tensor<S> apply_scattering(const Tensor<S>& clean, const Tensor<S>& t,
                           const Airlight& airlight);

template <typename S>
HazyPair<S> synthesize(const SceneSpec<S>& scene);

/// J = (I - A (1 - t)) / max(t, t_floor), clamped to [0,1].
template <typename S>
Tensor<S> invert_exact(const Tensor<S>& hazy, const Tensor<S>& t,
                       const Airlight& airlight,
                       double t_floor = kDefaultTransmissionFloor);

/// Procedural scene: smooth colour gradients, band-limited texture and
/// hard-edged rectangles/disks; depth is a ramp plus blobs normalized to
/// [0, 3]; beta ~ U[0.4, 2.0]; A ~ U[0.7, 1.0] per channel.
SceneSpec<double> generate_scene(std::uint64_t seed, int size);

/// Convenience: generate_scene followed by synthesize.
HazyPair<double> generate_pair(std::uint64_t seed, int size);

}  // namespace haanet
