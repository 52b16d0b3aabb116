#include "haanet/mfem.hpp"

#include <stdexcept>

namespace haanet {

std::string mfem_scale_name(std::size_t index) {
  const int k = kMfemScales.at(index);
  return k == 0 ? std::string("global") : "k" + std::to_string(k);
}

template <typename S>
MfemWeights<S> MfemWeights<S>::init(int channels) {
  if (channels <= 0) {
    throw std::invalid_argument("MFEM width must be positive");
  }
  MfemWeights<S> w;
  w.channels = channels;
  const Shape vec{1, channels, 1, 1};
  for (std::size_t k = 0; k < kMfemScales.size(); ++k) {
    w.low_gain[k] = Tensor<S>(vec, S(1));
    w.high_gain[k] = Tensor<S>(vec, S(1));
    w.channel_weight[k] = Tensor<S>(vec, S(0.25));
    w.low_gain[k].set_requires_grad(true);
    w.high_gain[k].set_requires_grad(true);
    w.channel_weight[k].set_requires_grad(true);
  }
  return w;
}

template <typename S>
void MfemWeights<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  for (std::size_t k = 0; k < kMfemScales.size(); ++k) {
    const std::string scale = mfem_scale_name(k);
    fn(prefix + ".low_gain." + scale, low_gain[k]);
    fn(prefix + ".high_gain." + scale, high_gain[k]);
    fn(prefix + ".channel_weight." + scale, channel_weight[k]);
  }
}

template <typename S>
std::size_t MfemWeights<S>::parameter_count() {
  std::size_t total = 0;
  visit("", [&](const std::string&, Tensor<S>& t) { total += t.size(); });
  return total;
}

template <typename S>
SubBands<S> decouple(const Var<S>& x) {
  SubBands<S> bands;
  for (std::size_t k = 0; k < kMfemScales.size(); ++k) {
    const PoolSpec pool = kMfemScales[k] == 0 ? PoolSpec::whole()
                                              : PoolSpec::window(kMfemScales[k]);
    bands.low[k] = avg_pool(x, pool);
    bands.high[k] = sub(x, bands.low[k]);
  }
  return bands;
}

template <typename S>
Var<S> modulate(const SubBands<S>& bands, MfemWeights<S>& w) {
  Tape<S>& tape = bands.low[0].tape();
  Var<S> y;
  for (std::size_t k = 0; k < kMfemScales.size(); ++k) {
    const Var<S> lo = channel_scale(bands.low[k], tape.leaf(w.low_gain[k]));
    const Var<S> hi = channel_scale(bands.high[k], tape.leaf(w.high_gain[k]));
    const Var<S> term =
        channel_scale(add(lo, hi), tape.leaf(w.channel_weight[k]));
    y = k == 0 ? term : add(y, term);
  }
  return y;
}

template <typename S>
Var<S> mfem_forward(const Var<S>& x, MfemWeights<S>& w) {
  if (x.shape().c != w.channels) {
    throw ShapeError("MFEM expects " + std::to_string(w.channels) +
                     " channels, got input " + x.shape().str());
  }
  return modulate(decouple(x), w);
}

#define HAANET_INSTANTIATE_MFEM(S)                                  \
  template struct MfemWeights<S>;                                   \
  template SubBands<S> decouple(const Var<S>&);                     \
  template Var<S> modulate(const SubBands<S>&, MfemWeights<S>&);    \
  template Var<S> mfem_forward(const Var<S>&, MfemWeights<S>&);

HAANET_INSTANTIATE_MFEM(float)
HAANET_INSTANTIATE_MFEM(double)

#undef HAANET_INSTANTIATE_MFEM

}  // namespace haanet
