#include "haanet/net.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "haanet/rng.hpp"

namespace haanet {

void NetConfig::validate() const {
  if (base_channels <= 0 || base_channels % 8 != 0) {
    throw std::invalid_argument(
        "base_channels must be a positive multiple of 8, got " +
        std::to_string(base_channels));
  }
  if (num_haab < 0) throw std::invalid_argument("num_haab must be >= 0");
}

template <typename S>
HaabWeights<S> HaabWeights<S>::init(int channels, bool use_haam, bool use_mfem,
                                    std::uint64_t seed) {
  Rng seeds(seed);
  HaabWeights<S> w;
  w.use_haam = use_haam;
  w.use_mfem = use_mfem;
  w.norm_gamma = Tensor<S>({1, channels, 1, 1}, S(1));
  w.norm_beta = Tensor<S>({1, channels, 1, 1}, S(0));
  w.norm_gamma.set_requires_grad(true);
  w.norm_beta.set_requires_grad(true);
  const std::uint64_t body_seed = seeds.next();
  if (use_haam) w.haam = HaamWeights<S>::init(channels, body_seed);
  if (use_mfem) w.mfem = MfemWeights<S>::init(channels);
  return w;
}

template <typename S>
void HaabWeights<S>::visit(const std::string& prefix, const ParamVisitor<S>& fn) {
  fn(prefix + ".norm.gamma", norm_gamma);
  fn(prefix + ".norm.beta", norm_beta);
  if (use_haam) haam.visit(prefix + ".haam", fn);
  if (use_mfem) mfem.visit(prefix + ".mfem", fn);
}

template <typename S>
int SkFusionWeights<S>::hidden_width(int channels) {
  return std::max(channels / 8, 4);
}

template <typename S>
SkFusionWeights<S> SkFusionWeights<S>::init(int channels, std::uint64_t seed) {
  const int hidden = hidden_width(channels);
  SkFusionWeights<S> w;
  w.reduce = Conv2d<S>::init({channels, hidden, 1, 1}, seed);
  w.logit_a = Conv2d<S>::zeros({hidden, channels, 1, 1});
  w.logit_b = Conv2d<S>::zeros({hidden, channels, 1, 1});
  return w;
}

template <typename S>
void SkFusionWeights<S>::visit(const std::string& prefix,
                               const ParamVisitor<S>& fn) {
  visit_conv(reduce, prefix + ".reduce", fn);
  visit_conv(logit_a, prefix + ".logit_a", fn);
  visit_conv(logit_b, prefix + ".logit_b", fn);
}

template <typename S>
NetWeights<S> NetWeights<S>::init(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng seeds(seed);
  const int n = config.base_channels;
  const int half = n / 2;
  NetWeights<S> w;
  w.config = config;
  w.stem = Conv2d<S>::init({3, half, 3, 1}, seeds.next());
  w.down1 = Conv2d<S>::init({half, half, 3, 2}, seeds.next());
  w.down2 = Conv2d<S>::init({half, n, 3, 2}, seeds.next());
  for (int b = 0; b < config.num_haab; ++b) {
    w.blocks.push_back(HaabWeights<S>::init(n, config.use_haam, config.use_mfem,
                                            seeds.next()));
  }
  w.up1 = Conv2d<S>::init({n, half, 1, 1}, seeds.next());
  w.up2 = Conv2d<S>::init({half, half, 1, 1}, seeds.next());
  const std::uint64_t f1 = seeds.next();
  const std::uint64_t f2 = seeds.next();
  if (config.use_skfusion) {
    w.fuse1 = SkFusionWeights<S>::init(half, f1);
    w.fuse2 = SkFusionWeights<S>::init(half, f2);
  }
  // Zero head: the untrained network returns its input unchanged.
  seeds.next();
  w.head = Conv2d<S>::zeros({half, 3, 3, 1});
  return w;
}

template <typename S>
void NetWeights<S>::visit(const ParamVisitor<S>& fn) {
  visit_conv(stem, "stem", fn);
  visit_conv(down1, "down1", fn);
  visit_conv(down2, "down2", fn);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].visit("haab" + std::to_string(b), fn);
  }
  visit_conv(up1, "up1", fn);
  if (config.use_skfusion) fuse1.visit("fuse1", fn);
  visit_conv(up2, "up2", fn);
  if (config.use_skfusion) fuse2.visit("fuse2", fn);
  visit_conv(head, "head", fn);
}

template <typename S>
std::size_t NetWeights<S>::parameter_count() {
  std::size_t total = 0;
  visit([&](const std::string&, Tensor<S>& t) { total += t.size(); });
  return total;
}

template <typename S>
std::vector<std::pair<std::string, Tensor<S>*>> NetWeights<S>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<S>*>> out;
  visit([&](const std::string& name, Tensor<S>& t) { out.emplace_back(name, &t); });
  return out;
}

template <typename U, typename S>
NetWeights<U> cast_weights(NetWeights<S>& w) {
  NetWeights<U> out = NetWeights<U>::init(w.config, 0);
  auto src = w.named_parameters();
  auto dst = out.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const bool grad = dst[i].second->requires_grad();
    *dst[i].second = src[i].second->template cast<U>();
    dst[i].second->set_requires_grad(grad);
  }
  return out;
}

template <typename S>
Var<S> haab_forward(const Var<S>& x, HaabWeights<S>& w,
                    const HaamInjection<S>* inject) {
  Tape<S>& tape = x.tape();
  Var<S> h = channel_norm(x, tape.leaf(w.norm_gamma), tape.leaf(w.norm_beta));
  if (w.use_haam) h = haam_forward(h, w.haam, inject);
  if (w.use_mfem) h = mfem_forward(h, w.mfem);
  return add(x, h);
}

template <typename S>
Var<S> sk_fusion_weight(const Var<S>& a, const Var<S>& b, SkFusionWeights<S>& w) {
  if (a.shape() != b.shape()) {
    throw ShapeError("sk_fusion branch shapes differ: " + a.shape().str() +
                     " vs " + b.shape().str());
  }
  const Var<S> s = relu(conv2d(reduce_mean_spatial(add(a, b)), w.reduce));
  // Two-way softmax: w_a = exp(la) / (exp(la) + exp(lb)) = sigmoid(la - lb).
  return sigmoid(sub(conv2d(s, w.logit_a), conv2d(s, w.logit_b)));
}

template <typename S>
Var<S> sk_fusion(const Var<S>& a, const Var<S>& b, SkFusionWeights<S>& w) {
  const Var<S> wa = sk_fusion_weight(a, b, w);
  // wa * a + (1 - wa) * b == b + wa * (a - b)
  return add(b, mul(sub(a, b), wa));
}

namespace {

template <typename S>
Var<S> merge(const Var<S>& skip, const Var<S>& up, bool use_sk,
             SkFusionWeights<S>& w) {
  if (use_sk) return sk_fusion(skip, up, w);
  return affine(add(skip, up), S(0.5), S(0));
}

}  // namespace

template <typename S>
Var<S> net_forward(const Var<S>& hazy, NetWeights<S>& w) {
  const Shape s = hazy.shape();
  if (s.c != 3) {
    throw ShapeError("network input must have 3 channels, got " + s.str());
  }
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw ShapeError("network input " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " is not divisible by 4; pad by " +
                     std::to_string((4 - s.h % 4) % 4) + " rows and " +
                     std::to_string((4 - s.w % 4) % 4) + " columns");
  }
  const bool sk = w.config.use_skfusion;
  const Var<S> f0 = relu(conv2d(hazy, w.stem));
  const Var<S> f1 = relu(downsample(f0, w.down1));
  Var<S> f = relu(downsample(f1, w.down2));
  for (HaabWeights<S>& block : w.blocks) f = haab_forward(f, block);
  Var<S> d1 = merge(f1, upsample(f, w.up1), sk, w.fuse1);
  Var<S> d0 = merge(f0, upsample(d1, w.up2), sk, w.fuse2);
  const Var<S> residual = affine(tanh(conv2d(d0, w.head)), S(0.5), S(0));
  return clamp(add(hazy, residual), S(0), S(1));
}

template <typename S>
Tensor<S> dehaze(const Tensor<S>& hazy, NetWeights<S>& w) {
  Tape<S> tape;
  // Constant parameters keep the tape free of backward closures.
  std::vector<std::pair<Tensor<S>*, bool>> flags;
  for (auto& [name, t] : w.named_parameters()) {
    flags.emplace_back(t, t->requires_grad());
    t->set_requires_grad(false);
  }
  Tensor<S> out;
  try {
    out = net_forward(tape.constant(hazy), w).value();
  } catch (...) {
    for (auto& [t, g] : flags) t->set_requires_grad(g);
    throw;
  }
  for (auto& [t, g] : flags) t->set_requires_grad(g);
  return out;
}

#define HAANET_INSTANTIATE_NET(S)                                             \
  template struct HaabWeights<S>;                                             \
  template struct SkFusionWeights<S>;                                         \
  template struct NetWeights<S>;                                              \
  template Var<S> haab_forward(const Var<S>&, HaabWeights<S>&,                \
                               const HaamInjection<S>*);                      \
  template Var<S> sk_fusion(const Var<S>&, const Var<S>&, SkFusionWeights<S>&); \
  template Var<S> sk_fusion_weight(const Var<S>&, const Var<S>&,              \
                                   SkFusionWeights<S>&);                      \
  template Var<S> net_forward(const Var<S>&, NetWeights<S>&);                 \
  template Tensor<S> dehaze(const Tensor<S>&, NetWeights<S>&);

HAANET_INSTANTIATE_NET(float)
HAANET_INSTANTIATE_NET(double)

template NetWeights<float> cast_weights<float, double>(NetWeights<double>&);
template NetWeights<double> cast_weights<double, float>(NetWeights<float>&);
template NetWeights<float> cast_weights<float, float>(NetWeights<float>&);
template NetWeights<double> cast_weights<double, double>(NetWeights<double>&);

#undef HAANET_INSTANTIATE_NET

}  // namespace haanet
