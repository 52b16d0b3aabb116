#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "haanet/gradcheck.hpp"
#include "haanet/losses.hpp"
#include "haanet/metrics.hpp"

using namespace haanet;
using testing::random_tensor;

namespace {

using V = Var<double>;

Tensor<double> lerp(const Tensor<double>& a, const Tensor<double>& b, double s) {
  Tensor<double> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * (b[i] - a[i]);
  return out;
}

double cr_value(const Tensor<double>& pred, const Tensor<double>& gt,
                const Tensor<double>& hazy, CrExtractor<double>& ext) {
  Tape<double> tape;
  return cr_loss(tape.constant(pred), gt, hazy, ext).value()[0];
}

}  // namespace

TEST_CASE("l1 examples and scalar-loop reference") {
  Tape<double> tape;
  const Tensor<double> a = random_tensor({2, 3, 5, 4}, 1);
  const Tensor<double> b = random_tensor({2, 3, 5, 4}, 2);
  CHECK(l1_loss(tape.constant(a), tape.constant(a)).value()[0] == 0.0);
  Tensor<double> shifted = a;
  for (double& v : shifted.data()) v += 0.1;
  CHECK(l1_loss(tape.constant(shifted), tape.constant(a)).value()[0] ==
        doctest::Approx(0.1).epsilon(1e-12));
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ref += std::abs(a[i] - b[i]);
  ref /= static_cast<double>(a.size());
  CHECK(std::abs(l1_loss(tape.constant(a), tape.constant(b)).value()[0] - ref) < 1e-15);
  CHECK_THROWS_AS(l1_loss(tape.constant(a), tape.constant(Tensor<double>({2, 3, 4, 5}))),
                  ShapeError);
}

TEST_CASE("extractor is frozen, seeded and shaped 16/32/64") {
  CrExtractor<double> e1 = CrExtractor<double>::make(5);
  CrExtractor<double> e2 = CrExtractor<double>::make(5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK_FALSE(e1.stages[i].weight.requires_grad());
    CHECK(testing::bit_equal(e1.stages[i].weight, e2.stages[i].weight));
    CHECK(e1.stages[i].spec.stride == 2);
  }
  Tape<double> tape;
  const auto f = e1.features(tape.constant(random_tensor({1, 3, 16, 16}, 3, 0.0, 1.0)));
  CHECK(f[0].shape() == Shape{1, 16, 8, 8});
  CHECK(f[1].shape() == Shape{1, 32, 4, 4});
  CHECK(f[2].shape() == Shape{1, 64, 2, 2});
}

TEST_CASE("contrastive term limits and line scan") {
  CrExtractor<double> ext = CrExtractor<double>::make(77);
  const Tensor<double> gt = random_tensor({1, 3, 16, 16}, 10, 0.0, 1.0);
  const Tensor<double> hazy = lerp(gt, Tensor<double>(gt.shape(), 0.9), 0.6);

  CHECK(cr_value(gt, gt, hazy, ext) == 0.0);
  const double degenerate = cr_value(hazy, gt, hazy, ext);
  CHECK(degenerate > 1e3);

  double previous = degenerate;
  for (double s : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double v = cr_value(lerp(hazy, gt, s), gt, hazy, ext);
    CHECK(v < previous);
    CHECK(v >= 0.0);
    previous = v;
  }
  Tape<double> tape;
  CHECK_THROWS_AS(cr_loss(tape.constant(gt), gt, Tensor<double>({1, 3, 8, 8}), ext), ShapeError);
}

TEST_CASE("total loss recomposes and reduces to l1 at lambda 0") {
  CrExtractor<double> ext = CrExtractor<double>::make(77);
  const Tensor<double> gt = random_tensor({2, 3, 8, 8}, 20, 0.0, 1.0);
  const Tensor<double> hazy = random_tensor({2, 3, 8, 8}, 21, 0.0, 1.0);
  const Tensor<double> pred = random_tensor({2, 3, 8, 8}, 22, 0.0, 1.0);
  Tape<double> tape;
  const V p = tape.constant(pred);
  const double l1 = l1_loss(p, tape.constant(gt)).value()[0];
  const double cr = cr_loss(p, gt, hazy, ext).value()[0];
  CHECK(total_loss(p, gt, hazy, 0.0, ext).value()[0] == l1);
  CHECK(std::abs(total_loss(p, gt, hazy, 0.2, ext).value()[0] - (0.2 * cr + l1)) < 1e-14);
  CHECK(total_loss(tape.constant(gt), gt, hazy, 0.2, ext).value()[0] == 0.0);
  CHECK_THROWS_AS(total_loss(p, gt, hazy, -1.0, ext), std::invalid_argument);
}

TEST_CASE("total loss gradient check at 1e-5") {
  CrExtractor<double> ext = CrExtractor<double>::make(77);
  const Tensor<double> gt = random_tensor({1, 3, 8, 8}, 30, 0.0, 1.0);
  const Tensor<double> hazy = random_tensor({1, 3, 8, 8}, 31, 0.0, 1.0);
  const Tensor<double> pred = random_tensor({1, 3, 8, 8}, 32, 0.0, 1.0);
  auto objective = [&](Tape<double>&, const V& v) { return total_loss(v, gt, hazy, 0.2, ext); };
  CHECK(finite_diff_check(objective, pred, 1e-5) < 1e-5);
}

TEST_CASE("psnr cap, closed form, reference and monotonicity") {
  const Tensor<double> x = random_tensor({1, 3, 12, 12}, 40, 0.2, 0.8);
  CHECK(psnr(x, x) == kPsnrCap);
  Tensor<double> off = x;
  for (double& v : off.data()) v += 0.1;
  CHECK(std::abs(psnr(off, x) - 20.0) < 1e-6);

  const Tensor<double> noise = random_tensor({1, 3, 12, 12}, 41);
  double previous = kPsnrCap;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Tensor<double> noisy = x;
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] += amp * noise[i];
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mse += (noisy[i] - x[i]) * (noisy[i] - x[i]);
    mse /= static_cast<double>(x.size());
    const double p = psnr(noisy, x);
    CHECK(std::abs(p - 10.0 * std::log10(1.0 / mse)) < 1e-9);
    CHECK(p < previous);
    previous = p;
  }
}

TEST_CASE("ssim identities and closed form") {
  const Tensor<double> a = random_tensor({1, 3, 16, 14}, 50, 0.0, 1.0);
  const Tensor<double> b = random_tensor({1, 3, 16, 14}, 51, 0.0, 1.0);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor<double> neg = a;
  for (double& v : neg.data()) v = 1.0 - v;
  CHECK(ssim(a, neg) < 1.0);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  const double s = ssim(a, b);
  CHECK((s >= -1.0 && s <= 1.0));

  const double c1 = 1e-4;
  const double expected = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
  const double got = ssim(Tensor<double>({1, 3, 11, 11}, 0.5), Tensor<double>({1, 3, 11, 11}, 0.6));
  CHECK(std::abs(got - expected) < 1e-12);

  CHECK_THROWS(ssim(Tensor<double>({1, 3, 10, 20}, 0.5), Tensor<double>({1, 3, 10, 20}, 0.5)));
}
