#pragma once

#include <cstdint>

#include "haanet/autograd.hpp"
#include "haanet/tensor.hpp"

namespace haanet {

// Elementwise arithmetic. `b` must either match `a` or be (n,c,1,1), in which
// case it is broadcast over the spatial plane.
enum class Elementwise { add, sub, mul, div };

template <typename S>
Var<S> elementwise(Elementwise op, const Var<S>& a, const Var<S>& b);

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return elementwise(Elementwise::add, a, b);
}
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  return elementwise(Elementwise::sub, a, b);
}
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  return elementwise(Elementwise::mul, a, b);
}
template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  return elementwise(Elementwise::div, a, b);
}

/// scale * x + shift
template <typename S>
Var<S> affine(const Var<S>& x, S scale, S shift);

/// Mean over every element; shape (1,1,1,1).
template <typename S>
Var<S> mean(const Var<S>& x);
template <typename S>
Var<S> sum(const Var<S>& x);

/// Global average pooling: (n,c,h,w) -> (n,c,1,1).
template <typename S>
Var<S> reduce_mean_spatial(const Var<S>& x);

/// (n,c,1,1) -> (n,c,h,w) by replication.
template <typename S>
Var<S> broadcast_spatial(const Var<S>& x, int h, int w);

template <typename S>
Var<S> abs(const Var<S>& x);

template <typename S>
Var<S> clamp(const Var<S>& x, S lo, S hi);

/// Multiplies channel c of x by v[c]; v has shape (1,c,1,1).
template <typename S>
Var<S> channel_scale(const Var<S>& x, const Var<S>& v);

enum class Activation { relu, sigmoid, tanh };

template <typename S>
Var<S> activation(Activation kind, const Var<S>& x);

template <typename S>
Var<S> relu(const Var<S>& x) {
  return activation(Activation::relu, x);
}
template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  return activation(Activation::sigmoid, x);
}
template <typename S>
Var<S> tanh(const Var<S>& x) {
  return activation(Activation::tanh, x);
}

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;

  int padding() const { return (kernel - 1) / 2; }
  Shape weight_shape() const {
    return {out_channels, in_channels, kernel, kernel};
  }
  Shape bias_shape() const { return {1, out_channels, 1, 1}; }
  int out_extent(int in) const { return (in + stride - 1) / stride; }
  void validate() const;
};

/// Convolution layer parameters. Bias is stored as (1,out,1,1).
template <typename S>
struct Conv2d {
  ConvSpec spec;
  Tensor<S> weight;
  Tensor<S> bias;

  /// Fan-in uniform weights in +-sqrt(6 / (in * k^2)), zero bias.
  static Conv2d init(const ConvSpec& spec, std::uint64_t seed);
  static Conv2d zeros(const ConvSpec& spec);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

/// Zero-padded cross-correlation, padding (k-1)/2, stride 1 or 2.
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias,
              int stride);

template <typename S>
Var<S> conv2d(const Var<S>& x, Conv2d<S>& layer);

/// Odd box window (stride 1, zero-padded, divided by the count of in-bounds
/// taps) or a global window.
struct PoolSpec {
  int kernel = 3;
  bool global = false;

  static PoolSpec window(int k) { return {k, false}; }
  static PoolSpec whole() { return {0, true}; }
};

template <typename S>
Var<S> avg_pool(const Var<S>& x, const PoolSpec& spec);

/// Nearest-neighbour x2 in both spatial dimensions.
template <typename S>
Var<S> upsample_nearest(const Var<S>& x);

/// Stride-2 convolution; halves spatial dims (ceil).
template <typename S>
Var<S> downsample(const Var<S>& x, Conv2d<S>& layer);

/// Nearest x2 followed by a 1x1 projection.
template <typename S>
Var<S> upsample(const Var<S>& x, Conv2d<S>& projection);

/// Per-sample normalization over (c,h,w) followed by a per-channel affine
/// transform; gamma and beta have shape (1,c,1,1).
template <typename S>
Var<S> channel_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                    S eps = S(1e-5));

}  // namespace haanet
