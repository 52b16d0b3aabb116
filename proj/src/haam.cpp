#include "haanet/haam.hpp"

#include <stdexcept>
#include <string>

#include "haanet/rng.hpp"

namespace haanet {
namespace {

void check_width(int channels) {
  if (channels <= 0 || channels % HaamWeights<float>::kReduction != 0) {
    throw std::invalid_argument("HAAM width must be a positive multiple of 8, got " +
                                std::to_string(channels));
  }
}

template <typename S>
void check_input(const Var<S>& x, const HaamWeights<S>& w) {
  if (x.shape().c != w.channels) {
    throw ShapeError("HAAM expects " + std::to_string(w.channels) +
                     " channels, got input " + x.shape().str());
  }
}

template <typename S>
Bottleneck<S> make_bottleneck(int channels, Rng& seeds, bool zero) {
  const int mid = channels / HaamWeights<S>::kReduction;
  const ConvSpec down{channels, mid, 1, 1};
  const ConvSpec up{mid, channels, 1, 1};
  if (zero) return {Conv2d<S>::zeros(down), Conv2d<S>::zeros(up)};
  const std::uint64_t a = seeds.next();
  const std::uint64_t b = seeds.next();
  return {Conv2d<S>::init(down, a), Conv2d<S>::init(up, b)};
}

template <typename S>
HaamWeights<S> make(int channels, std::uint64_t seed, bool zero) {
  check_width(channels);
  Rng seeds(seed);
  HaamWeights<S> w;
  w.channels = channels;
  const ConvSpec feat{channels, channels, 3, 1};
  w.airlight = make_bottleneck<S>(channels, seeds, zero);
  w.trans_features = zero ? Conv2d<S>::zeros(feat)
                          : Conv2d<S>::init(feat, seeds.next());
  w.trans_proj = make_bottleneck<S>(channels, seeds, zero);
  w.recip_features = zero ? Conv2d<S>::zeros(feat)
                          : Conv2d<S>::init(feat, seeds.next());
  w.recip_proj = make_bottleneck<S>(channels, seeds, zero);
  return w;
}

template <typename S>
Var<S> project(const Var<S>& x, Bottleneck<S>& b) {
  return sigmoid(conv2d(relu(conv2d(x, b.reduce)), b.expand));
}

template <typename S>
Var<S> injected(Tape<S>& tape, const std::optional<Tensor<S>>& value,
                const Shape& expected, const char* what) {
  if (value->shape() != expected) {
    throw ShapeError(std::string("injected ") + what + " has shape " +
                     value->shape().str() + ", expected " + expected.str());
  }
  return tape.constant(*value);
}

}  // namespace

template <typename S>
HaamWeights<S> HaamWeights<S>::init(int channels, std::uint64_t seed) {
  return make<S>(channels, seed, false);
}

template <typename S>
HaamWeights<S> HaamWeights<S>::zeros(int channels) {
  return make<S>(channels, 0, true);
}

template <typename S>
void HaamWeights<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  visit_conv(airlight.reduce, prefix + ".airlight.reduce", fn);
  visit_conv(airlight.expand, prefix + ".airlight.expand", fn);
  visit_conv(trans_features, prefix + ".trans.features", fn);
  visit_conv(trans_proj.reduce, prefix + ".trans.reduce", fn);
  visit_conv(trans_proj.expand, prefix + ".trans.expand", fn);
  visit_conv(recip_features, prefix + ".recip.features", fn);
  visit_conv(recip_proj.reduce, prefix + ".recip.reduce", fn);
  visit_conv(recip_proj.expand, prefix + ".recip.expand", fn);
}

template <typename S>
std::size_t HaamWeights<S>::parameter_count() {
  std::size_t total = 0;
  visit("", [&](const std::string&, Tensor<S>& t) { total += t.size(); });
  return total;
}

template <typename S>
Var<S> estimate_airlight(const Var<S>& x, HaamWeights<S>& w) {
  check_input(x, w);
  return project(reduce_mean_spatial(x), w.airlight);
}

template <typename S>
Var<S> estimate_transmission(const Var<S>& x, HaamWeights<S>& w) {
  check_input(x, w);
  return project(conv2d(x, w.trans_features), w.trans_proj);
}

template <typename S>
Var<S> estimate_transmission_recip(const Var<S>& x, HaamWeights<S>& w) {
  check_input(x, w);
  return project(conv2d(x, w.recip_features), w.recip_proj);
}

template <typename S>
Var<S> haam_forward(const Var<S>& x, HaamWeights<S>& w,
                    const HaamInjection<S>* inject) {
  check_input(x, w);
  Tape<S>& tape = x.tape();
  const Shape s = x.shape();
  const Var<S> a = inject && inject->airlight
                       ? injected(tape, inject->airlight, {s.n, s.c, 1, 1}, "airlight")
                       : estimate_airlight(x, w);
  const Var<S> t = inject && inject->transmission
                       ? injected(tape, inject->transmission, s, "transmission")
                       : estimate_transmission(x, w);
  const Var<S> tp = inject && inject->recip
                        ? injected(tape, inject->recip, s, "reciprocal")
                        : estimate_transmission_recip(x, w);
  // X - A (1 - T) estimates J T; T' stands in for 1 / T.
  const Var<S> haze = mul(affine(t, S(-1), S(1)), a);
  return mul(sub(x, haze), tp);
}

#define HAANET_INSTANTIATE_HAAM(S)                                            \
  template struct HaamWeights<S>;                                             \
  template Var<S> estimate_airlight(const Var<S>&, HaamWeights<S>&);          \
  template Var<S> estimate_transmission(const Var<S>&, HaamWeights<S>&);      \
  template Var<S> estimate_transmission_recip(const Var<S>&, HaamWeights<S>&); \
  template Var<S> haam_forward(const Var<S>&, HaamWeights<S>&,                \
                               const HaamInjection<S>*);

HAANET_INSTANTIATE_HAAM(float)
HAANET_INSTANTIATE_HAAM(double)

#undef HAANET_INSTANTIATE_HAAM

}  // namespace haanet
