#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "haanet/checkpoint.hpp"
#include "haanet/gradcheck.hpp"
#include "haanet/net.hpp"

using namespace haanet;
using testing::random_tensor;

namespace {

using V = Var<double>;

std::size_t conv_count(std::size_t in, std::size_t out, std::size_t k) {
  return in * out * k * k + out;
}

// Written out module by module, independent of the visit() walk.
std::size_t analytic_count(const NetConfig& c) {
  const std::size_t n = c.base_channels;
  const std::size_t half = n / 2;
  std::size_t total = conv_count(3, half, 3) + conv_count(half, half, 3) +
                      conv_count(half, n, 3);
  const std::size_t r = n / 8;
  const std::size_t bott = n * r + r + r * n + n;
  const std::size_t haam = 3 * bott + 2 * conv_count(n, n, 3);
  for (int b = 0; b < c.num_haab; ++b) {
    total += 2 * n;
    if (c.use_haam) total += haam;
    if (c.use_mfem) total += 12 * n;
  }
  total += conv_count(n, half, 1) + conv_count(half, half, 1);
  if (c.use_skfusion) {
    const std::size_t d = std::max<std::size_t>(half / 8, 4);
    total += 2 * (half * d + d + 2 * (d * half + half));
  }
  return total + conv_count(half, 3, 3);
}

// Per-sample normalization over (c, h, w) followed by per-channel affine.
Tensor<double> reference_norm(const Tensor<double>& x, const Tensor<double>& g,
                              const Tensor<double>& b) {
  const Shape s = x.shape();
  Tensor<double> out(s);
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < per; ++i) mu += x[n * per + i];
    mu /= static_cast<double>(per);
    for (std::size_t i = 0; i < per; ++i) var += (x[n * per + i] - mu) * (x[n * per + i] - mu);
    var /= static_cast<double>(per);
    for (int c = 0; c < s.c; ++c) {
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const std::size_t i = n * per + c * s.plane() + p;
        out[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
      }
    }
  }
  return out;
}

void randomize_head(NetWeights<double>& w, std::uint64_t seed) {
  w.head.weight = random_tensor(w.head.weight.shape(), seed, -0.2, 0.2);
  w.head.bias = random_tensor(w.head.bias.shape(), seed + 1, -0.2, 0.2);
}

// Spread of a zero-padding artefact, in pixels at each resolution. A 3x3
// conv widens a contaminated border band by one, a stride-2 conv maps band
// b to at most b/2 + 1, MFEM's widest box window adds its radius of 3, and
// nearest upsampling doubles the band. Global pooling and the per-sample
// norm only ever add spatially constant terms.
int border_margin(const NetConfig& c) {
  const int quarter_in = 1;  // stem -> 1, down1 -> 1, down2 -> 1
  const int per_block = (c.use_haam ? 1 : 0) + (c.use_mfem ? 3 : 0);
  const int quarter = quarter_in + c.num_haab * per_block;
  return 4 * quarter + 1;  // two nearest upsamplings, then the 3x3 head
}

}  // namespace

TEST_CASE("freshly initialized network returns its input unchanged") {
  NetWeights<double> w = NetWeights<double>::init(NetConfig::desk(), 3);
  for (double v : w.head.weight.data()) REQUIRE(v == 0.0);
  const Tensor<double> x = random_tensor({2, 3, 12, 8}, 4, 0.0, 1.0);
  CHECK(testing::bit_equal(dehaze(x, w), x));
}

TEST_CASE("output shape, range and divisibility") {
  NetWeights<double> w = NetWeights<double>::init(NetConfig::desk(), 5);
  w.head.weight = random_tensor(w.head.weight.shape(), 6, -3.0, 3.0);  // saturate the clamp
  const Tensor<double> x = random_tensor({1, 3, 16, 20}, 7, 0.0, 1.0);
  const Tensor<double> y = dehaze(x, w);
  CHECK(y.shape() == x.shape());
  for (double v : y.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(testing::max_abs_diff(y, x) > 0.0);
  CHECK_THROWS_AS(dehaze(Tensor<double>({1, 3, 10, 12}), w), ShapeError);
  CHECK_THROWS_AS(dehaze(Tensor<double>({1, 4, 8, 8}), w), ShapeError);
  try {
    dehaze(Tensor<double>({1, 3, 10, 13}), w);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("2 rows and 3 columns") != std::string::npos);
  }
}

TEST_CASE("parameter count equals the analytic module sum") {
  for (NetConfig c : {NetConfig::desk(), NetConfig{}, NetConfig{16, 2, false, false, false},
                      NetConfig{16, 3, true, false, true}, NetConfig{24, 1, false, true, false}}) {
    NetWeights<float> w = NetWeights<float>::init(c, 1);
    CHECK(w.parameter_count() == analytic_count(c));
    CHECK(table_parameter_count(net_table(w)) == analytic_count(c));
  }
}

TEST_CASE("parameter count does not depend on resolution") {
  NetWeights<double> w = NetWeights<double>::init(NetConfig::desk(), 2);
  const std::size_t before = w.parameter_count();
  dehaze(Tensor<double>({1, 3, 8, 8}, 0.5), w);
  dehaze(Tensor<double>({1, 3, 16, 16}, 0.5), w);
  CHECK(w.parameter_count() == before);
}

TEST_CASE("sk fusion weights are a two-way softmax") {
  SkFusionWeights<double> w = SkFusionWeights<double>::init(8, 9);
  Tape<double> tape;
  const V a = tape.constant(random_tensor({2, 8, 5, 5}, 10));
  const V b = tape.constant(random_tensor({2, 8, 5, 5}, 11));

  // Equal logits at init.
  const Tensor<double> merged = sk_fusion(a, b, w).value();
  for (std::size_t i = 0; i < merged.size(); ++i) {
    CHECK(merged[i] == doctest::Approx((a.value()[i] + b.value()[i]) / 2).epsilon(1e-15));
  }

  w.logit_a.weight = random_tensor(w.logit_a.weight.shape(), 12, -2.0, 2.0);
  w.logit_b.weight = random_tensor(w.logit_b.weight.shape(), 13, -2.0, 2.0);
  w.logit_a.bias = random_tensor(w.logit_a.bias.shape(), 14, -1.0, 1.0);
  const Tensor<double> wa = sk_fusion_weight(a, b, w).value();
  CHECK(wa.shape() == Shape{2, 8, 1, 1});
  for (double v : wa.data()) CHECK((v > 0.0 && v < 1.0));

  // Reference: explicit exponentials normalised over the two branches.
  const V s = relu(conv2d(reduce_mean_spatial(add(a, b)), w.reduce));
  const Tensor<double> la = conv2d(s, w.logit_a).value();
  const Tensor<double> lb = conv2d(s, w.logit_b).value();
  const Tensor<double> out = sk_fusion(a, b, w).value();
  const Shape sh = a.shape();
  double worst = 0.0;
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const double ea = std::exp(la[n * sh.c + c]);
      const double eb = std::exp(lb[n * sh.c + c]);
      const double wa_ref = ea / (ea + eb);
      const double wb_ref = eb / (ea + eb);
      worst = std::max(worst, std::abs(wa[n * sh.c + c] - wa_ref));
      for (std::size_t p = 0; p < sh.plane(); ++p) {
        const std::size_t i = a.value().offset(n, c, 0, 0) + p;
        worst = std::max(worst, std::abs(out[i] - (wa_ref * a.value()[i] + wb_ref * b.value()[i])));
      }
    }
  }
  CHECK(worst < 1e-14);
  CHECK_THROWS_AS(sk_fusion(a, tape.constant(Tensor<double>({2, 8, 4, 5})), w), ShapeError);
}

TEST_CASE("haab with a pass-through attention is x plus the normalized input") {
  HaabWeights<double> w = HaabWeights<double>::init(16, true, true, 21);
  w.norm_gamma = random_tensor({1, 16, 1, 1}, 22, 0.5, 1.5);
  w.norm_beta = random_tensor({1, 16, 1, 1}, 23, -0.5, 0.5);
  const Tensor<double> x = random_tensor({1, 16, 6, 6}, 24);
  HaamInjection<double> pass;
  pass.airlight = Tensor<double>({1, 16, 1, 1}, 0.0);
  pass.recip = Tensor<double>({1, 16, 6, 6}, 1.0);
  Tape<double> tape;
  const Tensor<double> y = haab_forward(tape.constant(x), w, &pass).value();
  const Tensor<double> normed = reference_norm(x, w.norm_gamma, w.norm_beta);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - (x[i] + normed[i])));
  CHECK(worst < 1e-12);
}

TEST_CASE("haab preserves shape in every configuration") {
  for (bool haam : {true, false}) {
    for (bool mfem : {true, false}) {
      HaabWeights<double> w = HaabWeights<double>::init(8, haam, mfem, 30);
      for (Shape s : {Shape{1, 8, 4, 4}, Shape{2, 8, 7, 3}, Shape{1, 8, 1, 1}}) {
        Tape<double> tape;
        CHECK(haab_forward(tape.constant(random_tensor(s, 31)), w).shape() == s);
      }
    }
  }
}

TEST_CASE("haab end-to-end gradient check at 1e-4") {
  HaabWeights<double> w = HaabWeights<double>::init(8, true, true, 40);
  const Tensor<double> x = random_tensor({1, 8, 6, 6}, 41);
  const Tensor<double> proj = random_tensor({1, 8, 6, 6}, 42, 0.5, 1.5);
  auto objective = [&](Tape<double>& tape, const V& v) {
    return sum(mul(haab_forward(v, w), tape.constant(proj)));
  };
  CHECK(finite_diff_check(objective, x, 1e-5) < 1e-4);
}

TEST_CASE("constant input gives a constant interior away from the derived margin") {
  for (NetConfig c : {NetConfig::desk(), NetConfig{16, 1, false, true, false},
                      NetConfig{16, 2, true, false, true}, NetConfig{16, 2, false, false, false}}) {
    NetWeights<double> w = NetWeights<double>::init(c, 50);
    randomize_head(w, 51);
    const int margin = border_margin(c);
    const int size = 2 * margin + 12 + (4 - (2 * margin + 12) % 4) % 4;
    const Tensor<double> y = dehaze(Tensor<double>({1, 3, size, size}, 0.4), w);
    bool border_varies = false;
    double interior_spread = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
      const double ref = y.at(0, ch, size / 2, size / 2);
      for (int yy = 0; yy < size; ++yy) {
        for (int xx = 0; xx < size; ++xx) {
          const double d = std::abs(y.at(0, ch, yy, xx) - ref);
          const bool inside = yy >= margin && xx >= margin && yy < size - margin &&
                              xx < size - margin;
          if (inside) interior_spread = std::max(interior_spread, d);
          else if (d > 1e-9) border_varies = true;
        }
      }
    }
    CHECK(interior_spread < 1e-12);
    CHECK(border_varies);
  }
}

TEST_CASE("float and double forwards agree") {
  NetWeights<double> wd = NetWeights<double>::init(NetConfig::desk(), 60);
  randomize_head(wd, 61);
  NetWeights<float> wf = cast_weights<float>(wd);
  const Tensor<double> x = random_tensor({1, 3, 16, 16}, 62, 0.0, 1.0);
  const Tensor<double> yd = dehaze(x, wd);
  const Tensor<float> yf = dehaze(x.cast<float>(), wf);
  CHECK(testing::max_abs_diff(yd, yf.cast<double>()) < 1e-4);
}

TEST_CASE("initialization is deterministic and seed dependent") {
  NetWeights<float> a = NetWeights<float>::init(NetConfig::desk(), 70);
  NetWeights<float> b = NetWeights<float>::init(NetConfig::desk(), 70);
  NetWeights<float> c = NetWeights<float>::init(NetConfig::desk(), 71);
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  auto pc = c.named_parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(testing::bit_equal(*pa[i].second, *pb[i].second));
    if (!testing::bit_equal(*pa[i].second, *pc[i].second)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(NetWeights<float>::init(NetConfig{12, 2, true, true, true}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(NetWeights<float>::init(NetConfig{16, -1, true, true, true}, 1),
                  std::invalid_argument);
  CHECK_NOTHROW(NetWeights<float>::init(NetConfig{16, 0, true, true, true}, 1));
}
