#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "haanet/autograd.hpp"
#include "haanet/haam.hpp"
#include "haanet/mfem.hpp"
#include "haanet/ops.hpp"
#include "haanet/params.hpp"

namespace haanet {

/// Topology switches. A disabled module is left out of every attention block,
/// so with both off a block is just its normalized residual. With
/// use_skfusion off skips are merged by equal-weight averaging. All three on
/// is the full network.
struct NetConfig {
  int base_channels = 64;
  int num_haab = 4;
  bool use_haam = true;
  bool use_mfem = true;
  bool use_skfusion = true;

  static NetConfig desk() { return {16, 2, true, true, true}; }
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

/// Residual attention block: y = x + mfem(haam(norm(x))).
template <typename S>
struct HaabWeights {
  Tensor<S> norm_gamma;
  Tensor<S> norm_beta;
  HaamWeights<S> haam;      // when use_haam
  MfemWeights<S> mfem;      // when use_mfem
  bool use_haam = true;
  bool use_mfem = true;

  static HaabWeights init(int channels, bool use_haam, bool use_mfem,
                          std::uint64_t seed);
  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
};

/// Selective fusion of two same-shape branches with per-channel softmax
/// weights computed from GAP(a + b).
template <typename S>
struct SkFusionWeights {
  Conv2d<S> reduce;
  Conv2d<S> logit_a;
  Conv2d<S> logit_b;

  /// Logit heads start at zero, so fusion begins as (a + b) / 2.
  static SkFusionWeights init(int channels, std::uint64_t seed);
  static int hidden_width(int channels);
  void visit(const std::string& prefix, const ParamVisitor<S>& fn);
};

template <typename S>
struct NetWeights {
  NetConfig config;
  Conv2d<S> stem;
  Conv2d<S> down1;
  Conv2d<S> down2;
  std::vector<HaabWeights<S>> blocks;
  Conv2d<S> up1;
  SkFusionWeights<S> fuse1;
  Conv2d<S> up2;
  SkFusionWeights<S> fuse2;
  Conv2d<S> head;

  static NetWeights init(const NetConfig& config, std::uint64_t seed);

  void visit(const ParamVisitor<S>& fn);
  std::size_t parameter_count();
  /// Named parameter tensors in a fixed order.
  std::vector<std::pair<std::string, Tensor<S>*>> named_parameters();
};

/// Same network with parameters converted to another element type.
template <typename U, typename S>
NetWeights<U> cast_weights(NetWeights<S>& w);

template <typename S>
Var<S> haab_forward(const Var<S>& x, HaabWeights<S>& w,
                    const HaamInjection<S>* inject = nullptr);

template <typename S>
Var<S> sk_fusion(const Var<S>& a, const Var<S>& b, SkFusionWeights<S>& w);

/// Per-channel fusion weight of branch `a` (in (0,1)); branch b gets 1 - w.
template <typename S>
Var<S> sk_fusion_weight(const Var<S>& a, const Var<S>& b, SkFusionWeights<S>& w);

/// dehazed = clamp(hazy + 0.5 tanh(head(...)), 0, 1). Requires h, w
/// divisible by 4.
template <typename S>
Var<S> net_forward(const Var<S>& hazy, NetWeights<S>& w);

/// Inference convenience on a throwaway tape.
template <typename S>
Tensor<S> dehaze(const Tensor<S>& hazy, NetWeights<S>& w);

}  // namespace haanet
