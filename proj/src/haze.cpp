#include "haanet/haze.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "haanet/rng.hpp"

namespace haanet {
namespace {

void check_image(const Shape& s, const char* what) {
  if (s.c != 3) {
    throw ShapeError(std::string(what) + " must have 3 channels, got " + s.str());
  }
}

void check_map_for(const Shape& image, const Shape& map) {
  if (map != Shape{image.n, 1, image.h, image.w}) {
    throw ShapeError("transmission map " + map.str() +
                     " does not match image " + image.str());
  }
}

}  // namespace

template <typename S>
void SceneSpec<S>::validate() const {
  check_image(clean.shape(), "clean image");
  check_map_for(clean.shape(), depth.shape());
  for (S v : clean.data()) {
    if (!(v >= 0 && v <= 1)) {
      throw std::invalid_argument("clean image values must lie in [0,1]");
    }
  }
  for (S d : depth.data()) {
    if (!(d >= 0)) throw std::invalid_argument("depth must be non-negative");
  }
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  for (double a : airlight) {
    if (!(a >= 0.7 && a <= 1.0)) {
      throw std::invalid_argument("airlight must lie in [0.7, 1.0], got " +
                                  std::to_string(a));
    }
  }
}

template <typename S>
Tensor<S> transmission(const Tensor<S>& depth, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
  Tensor<S> t(depth.shape());
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!(depth[i] >= 0)) {
      throw std::invalid_argument("depth must be non-negative");
    }
    t[i] = static_cast<S>(std::exp(-beta * static_cast<double>(depth[i])));
  }
  return t;
}

template <typename S>
Tensor<S> apply_scattering(const Tensor<S>& clean, const Tensor<S>& t,
                           const Airlight& airlight) {
  const Shape s = clean.shape();
  check_image(s, "clean image");
  check_map_for(s, t.shape());
  for (double a : airlight) {
    if (!(a >= 0 && a <= 1)) {
      throw std::invalid_argument("airlight must lie in [0,1]");
    }
  }
  Tensor<S> hazy(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 3; ++c) {
      const S a = static_cast<S>(airlight[c]);
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const S j = clean.at(n, c, y, x);
          if (!(j >= 0 && j <= 1)) {
            throw std::invalid_argument("clean image values must lie in [0,1]");
          }
          const S tv = t.at(n, 0, y, x);
          hazy.at(n, c, y, x) = j * tv + a * (S(1) - tv);
        }
      }
    }
  }
  return hazy;
}

template <typename S>
HazyPair<S> synthesize(const SceneSpec<S>& scene) {
  scene.validate();
  HazyPair<S> pair;
  pair.transmission = transmission(scene.depth, scene.beta);
  pair.hazy = apply_scattering(scene.clean, pair.transmission, scene.airlight);
  pair.clean = scene.clean;
  pair.airlight = scene.airlight;
  pair.seed = scene.seed;
  return pair;
}

template <typename S>
Tensor<S> invert_exact(const Tensor<S>& hazy, const Tensor<S>& t,
                       const Airlight& airlight, double t_floor) {
  if (!(t_floor > 0 && t_floor <= 0.2)) {
    throw std::invalid_argument("t_floor must lie in (0, 0.2]");
  }
  const Shape s = hazy.shape();
  check_image(s, "hazy image");
  check_map_for(s, t.shape());
  Tensor<S> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < 3; ++c) {
      const S a = static_cast<S>(airlight[c]);
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          const S tv = std::max(t.at(n, 0, y, x), static_cast<S>(t_floor));
          const S j = (hazy.at(n, c, y, x) - a * (S(1) - tv)) / tv;
          out.at(n, c, y, x) = std::clamp(j, S(0), S(1));
        }
      }
    }
  }
  return out;
}

namespace {

// Saturated colour: one randomly chosen channel is near zero, as in the
// dark-channel statistics of natural outdoor images.
void palette_colour(Rng& rng, std::array<double, 3>& colour) {
  const std::size_t dark = rng.below(3);
  for (std::size_t c = 0; c < 3; ++c) {
    colour[c] = c == dark ? rng.uniform(0.0, 0.08) : rng.uniform(0.1, 1.0);
  }
}

}  // namespace

SceneSpec<double> generate_scene(std::uint64_t seed, int size) {
  if (size < 16) {
    throw std::invalid_argument("scene size must be at least 16, got " +
                                std::to_string(size));
  }
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  Rng rng(seed);
  SceneSpec<double> scene;
  scene.seed = seed;
  scene.clean = Tensor<double>({1, 3, size, size});
  scene.depth = Tensor<double>({1, 1, size, size});
  const double inv = 1.0 / size;

  // Smooth colour gradient.
  std::array<double, 3> c0{};
  std::array<double, 3> c1{};
  palette_colour(rng, c0);
  palette_colour(rng, c1);
  const double theta = rng.uniform(0.0, kTwoPi);
  const double gx = std::cos(theta);
  const double gy = std::sin(theta);
  const double lo = std::min(0.0, gx) + std::min(0.0, gy);
  const double hi = std::max(0.0, gx) + std::max(0.0, gy);

  // Band-limited texture: a few oriented sinusoids per channel spanning low
  // to high spatial frequencies (cycles per pixel).
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<std::array<Wave, 6>, 3> waves{};
  for (auto& channel : waves) {
    for (std::size_t k = 0; k < channel.size(); ++k) {
      const double f = k < 2 ? rng.uniform(0.01, 0.05) : rng.uniform(0.15, 0.45);
      const double phi = rng.uniform(0.0, kTwoPi);
      channel[k] = {f * std::cos(phi), f * std::sin(phi),
                    rng.uniform(0.0, kTwoPi), k < 2 ? 0.08 : 0.025};
    }
  }

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = ((x * inv) * gx + (y * inv) * gy - lo) / (hi - lo);
      for (int c = 0; c < 3; ++c) {
        double v = c0[c] + (c1[c] - c0[c]) * u;
        for (const Wave& wv : waves[c]) {
          v += wv.amp * std::sin(kTwoPi * (wv.fx * x + wv.fy * y) + wv.phase);
        }
        scene.clean.at(0, c, y, x) = v;
      }
    }
  }

  // Hard-edged rectangles and disks.
  const int shapes = 3 + static_cast<int>(rng.below(4));
  for (int k = 0; k < shapes; ++k) {
    const bool disk = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, size);
    const double cy = rng.uniform(0.0, size);
    const double rx = rng.uniform(0.05, 0.2) * size;
    const double ry = disk ? rx : rng.uniform(0.05, 0.2) * size;
    std::array<double, 3> color{};
    palette_colour(rng, color);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx;
        const double dy = y + 0.5 - cy;
        const bool inside = disk ? (dx * dx + dy * dy <= rx * rx)
                                 : (std::abs(dx) <= rx && std::abs(dy) <= ry);
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) scene.clean.at(0, c, y, x) = color[c];
      }
    }
  }
  for (double& v : scene.clean.data()) v = std::clamp(v, 0.0, 1.0);

  // Depth: ramp along a random direction plus Gaussian blobs.
  const double dtheta = rng.uniform(0.0, kTwoPi);
  const double dx_dir = std::cos(dtheta);
  const double dy_dir = std::sin(dtheta);
  struct Blob {
    double x, y, sigma, amp;
  };
  std::array<Blob, 3> blobs{};
  for (Blob& b : blobs) {
    b = {rng.uniform(0.0, size), rng.uniform(0.0, size),
         rng.uniform(0.1, 0.3) * size, rng.uniform(-0.6, 0.6)};
  }
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -dmin;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double d = (x * inv) * dx_dir + (y * inv) * dy_dir;
      for (const Blob& b : blobs) {
        const double rx = x - b.x;
        const double ry = y - b.y;
        d += b.amp * std::exp(-(rx * rx + ry * ry) / (2.0 * b.sigma * b.sigma));
      }
      scene.depth.at(0, 0, y, x) = d;
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
  }
  const double range = dmax - dmin;
  for (double& d : scene.depth.data()) {
    d = range > 0 ? 3.0 * (d - dmin) / range : 0.0;
  }

  scene.beta = rng.uniform(0.4, 2.0);
  for (double& a : scene.airlight) a = rng.uniform(0.7, 1.0);
  return scene;
}

HazyPair<double> generate_pair(std::uint64_t seed, int size) {
  return synthesize(generate_scene(seed, size));
}

#define HAANET_INSTANTIATE_HAZE(S)                                           \
  template struct SceneSpec<S>;                                              \
  template Tensor<S> transmission(const Tensor<S>&, double);                 \
  template Tensor<S> apply_scattering(const Tensor<S>&, const Tensor<S>&,    \
                                      const Airlight&);                      \
  template HazyPair<S> synthesize(const SceneSpec<S>&);                      \
  template Tensor<S> invert_exact(const Tensor<S>&, const Tensor<S>&,        \
                                  const Airlight&, double);

HAANET_INSTANTIATE_HAZE(float)
HAANET_INSTANTIATE_HAZE(double)

#undef HAANET_INSTANTIATE_HAZE

}  // namespace haanet
