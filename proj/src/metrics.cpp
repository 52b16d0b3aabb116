#include "haanet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace haanet {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w,
                                 const std::array<double, kWindow>& g) {
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * in[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

void check_pair(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + " shape mismatch: " + a.str() + " vs " +
                     b.str());
  }
}

}  // namespace

template <typename S>
double psnr(const Tensor<S>& pred, const Tensor<S>& target) {
  check_pair(pred.shape(), target.shape(), "psnr");
  if (pred.empty()) throw ShapeError("psnr of empty images");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <typename S>
double ssim(const Tensor<S>& pred, const Tensor<S>& target) {
  const Shape s = pred.shape();
  check_pair(s, target.shape(), "ssim");
  if (s.h < kWindow || s.w < kWindow) {
    throw ShapeError("ssim needs images of at least 11x11, got " + s.str());
  }
  const auto g = gaussian_taps();
  const std::size_t plane = s.plane();
  double total = 0;
  std::size_t count = 0;
  std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
  for (int q = 0; q < s.n * s.c; ++q) {
    for (std::size_t i = 0; i < plane; ++i) {
      a[i] = pred[q * plane + i];
      b[i] = target[q * plane + i];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, s.h, s.w, g);
    const auto mu_b = filter_valid(b, s.h, s.w, g);
    const auto e_aa = filter_valid(aa, s.h, s.w, g);
    const auto e_bb = filter_valid(bb, s.h, s.w, g);
    const auto e_ab = filter_valid(ab, s.h, s.w, g);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2);
      const double den =
          (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace haanet
