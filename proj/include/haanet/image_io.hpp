#pragma once

#include <filesystem>
#include <stdexcept>

#include "haanet/tensor.hpp"

namespace haanet {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary PPM ("P6", maxval 255). Pixels map linearly to [0,1]; saving
/// rounds half up after clamping. Images are (1,3,h,w).
Tensor<float> load_ppm(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Tensor<float>& image);

/// Single-channel map written as grey P6 (all three channels equal).
void save_ppm_gray(const std::filesystem::path& path, const Tensor<float>& map);

/// Reflect-pads the bottom/right edges up to a multiple of `multiple`.
Tensor<float> reflect_pad(const Tensor<float>& image, int multiple);
Tensor<float> crop(const Tensor<float>& image, int top, int left, int h, int w);
/// Horizontal concatenation of equal-height images.
Tensor<float> side_by_side(const Tensor<float>& left, const Tensor<float>& right);

}  // namespace haanet
