#include "haanet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace haanet {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

std::uint8_t quantize(float v) {
  const double x = std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(x + 0.5));
}

void write_bytes(const std::filesystem::path& path, int h, int w,
                 const std::vector<std::uint8_t>& rgb) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  if (!out) throw ImageIoError("failed writing " + path.string());
}

}  // namespace

Tensor<float> load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image " + path.string());
  if (header_token(in) != "P6") {
    throw ImageIoError(path.string() + " is not a binary PPM (P6)");
  }
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(header_token(in));
    h = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw ImageIoError("malformed PPM header in " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw ImageIoError("unsupported PPM geometry/maxval in " + path.string());
  }
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) {
    throw ImageIoError("truncated pixel data in " + path.string());
  }
  Tensor<float> image({1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        image.at(0, c, y, x) = rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
      }
    }
  }
  return image;
}

void save_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) {
    throw ShapeError("save_ppm expects a (1,3,h,w) image, got " + s.str());
  }
  std::vector<std::uint8_t> rgb(s.plane() * 3);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        rgb[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] = quantize(image.at(0, c, y, x));
      }
    }
  }
  write_bytes(path, s.h, s.w, rgb);
}

void save_ppm_gray(const std::filesystem::path& path, const Tensor<float>& map) {
  const Shape s = map.shape();
  if (s.n != 1 || s.c != 1) {
    throw ShapeError("save_ppm_gray expects a (1,1,h,w) map, got " + s.str());
  }
  std::vector<std::uint8_t> rgb(s.plane() * 3);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const std::uint8_t v = quantize(map[i]);
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = v;
  }
  write_bytes(path, s.h, s.w, rgb);
}

Tensor<float> reflect_pad(const Tensor<float>& image, int multiple) {
  const Shape s = image.shape();
  const int h = (s.h + multiple - 1) / multiple * multiple;
  const int w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return image;
  if (h - s.h >= s.h || w - s.w >= s.w) {
    throw ShapeError("image " + s.str() + " too small to reflect-pad");
  }
  auto reflect = [](int i, int n) { return i < n ? i : 2 * (n - 1) - i; };
  Tensor<float> out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          out.at(n, c, y, x) = image.at(n, c, reflect(y, s.h), reflect(x, s.w));
        }
      }
    }
  }
  return out;
}

Tensor<float> crop(const Tensor<float>& image, int top, int left, int h, int w) {
  const Shape s = image.shape();
  if (top < 0 || left < 0 || top + h > s.h || left + w > s.w) {
    throw ShapeError("crop window out of bounds for " + s.str());
  }
  Tensor<float> out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < h; ++y) {
        const float* src = image.raw() + image.offset(n, c, top + y, left);
        std::copy(src, src + w, out.raw() + out.offset(n, c, y, 0));
      }
    }
  }
  return out;
}

Tensor<float> side_by_side(const Tensor<float>& left, const Tensor<float>& right) {
  const Shape a = left.shape();
  const Shape b = right.shape();
  if (a.n != b.n || a.c != b.c || a.h != b.h) {
    throw ShapeError("side_by_side needs equal heights: " + a.str() + " vs " + b.str());
  }
  Tensor<float> out({a.n, a.c, a.h, a.w + b.w});
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c) {
      for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) out.at(n, c, y, x) = left.at(n, c, y, x);
        for (int x = 0; x < b.w; ++x) out.at(n, c, y, a.w + x) = right.at(n, c, y, x);
      }
    }
  }
  return out;
}

}  // namespace haanet
