#include "haanet/losses.hpp"

#include <stdexcept>

#include "haanet/rng.hpp"

namespace haanet {

template <typename S>
Var<S> l1_loss(const Var<S>& pred, const Var<S>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss shape mismatch: " + pred.shape().str() + " vs " +
                     target.shape().str());
  }
  return mean(abs(sub(pred, target)));
}

template <typename S>
CrExtractor<S> CrExtractor<S>::make(std::uint64_t seed) {
  CrExtractor<S> ext;
  ext.seed = seed;
  Rng seeds(seed);
  const std::array<int, 4> widths = {3, 16, 32, 64};
  for (std::size_t i = 0; i < ext.stages.size(); ++i) {
    ext.stages[i] = Conv2d<S>::init({widths[i], widths[i + 1], 3, 2}, seeds.next());
    ext.stages[i].weight.set_requires_grad(false);
    ext.stages[i].bias.set_requires_grad(false);
  }
  return ext;
}

template <typename S>
std::array<Var<S>, 3> CrExtractor<S>::features(const Var<S>& image) {
  std::array<Var<S>, 3> out;
  Var<S> h = image;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    h = relu(conv2d(h, stages[i]));
    out[i] = h;
  }
  return out;
}

template <typename S>
Var<S> cr_loss(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& hazy,
               CrExtractor<S>& ext) {
  if (pred.shape() != gt.shape() || pred.shape() != hazy.shape()) {
    throw ShapeError("cr_loss shape mismatch: pred " + pred.shape().str() +
                     ", gt " + gt.shape().str() + ", hazy " + hazy.shape().str());
  }
  Tape<S>& tape = pred.tape();
  const auto fa = ext.features(pred);
  const auto fp = ext.features(tape.constant(gt));
  const auto fn = ext.features(tape.constant(hazy));
  const Var<S> eps = tape.constant(Tensor<S>({1, 1, 1, 1}, S(CrExtractor<S>::kEpsilon)));
  Var<S> total;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const Var<S> ratio =
        div(l1_loss(fa[i], fp[i]), add(l1_loss(fa[i], fn[i]), eps));
    const Var<S> term = affine(ratio, S(CrExtractor<S>::kStageWeights[i]), S(0));
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

template <typename S>
Var<S> total_loss(const Var<S>& pred, const Tensor<S>& gt, const Tensor<S>& hazy,
                  double lambda, CrExtractor<S>& ext) {
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be non-negative");
  const Var<S> l1 = l1_loss(pred, pred.tape().constant(gt));
  if (lambda == 0) return l1;
  return add(affine(cr_loss(pred, gt, hazy, ext), S(lambda), S(0)), l1);
}

#define HAANET_INSTANTIATE_LOSSES(S)                                          \
  template Var<S> l1_loss(const Var<S>&, const Var<S>&);                      \
  template struct CrExtractor<S>;                                             \
  template Var<S> cr_loss(const Var<S>&, const Tensor<S>&, const Tensor<S>&,  \
                          CrExtractor<S>&);                                   \
  template Var<S> total_loss(const Var<S>&, const Tensor<S>&,                 \
                             const Tensor<S>&, double, CrExtractor<S>&);

HAANET_INSTANTIATE_LOSSES(float)
HAANET_INSTANTIATE_LOSSES(double)

#undef HAANET_INSTANTIATE_LOSSES

}  // namespace haanet
