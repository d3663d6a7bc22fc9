#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "langtrack/box.hpp"
#include "langtrack/tensor.hpp"

namespace langtrack {

/// 8-bit interleaved image, 1 (gray) or 3 (RGB) channels.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> px;

  Image() = default;
  Image(int height, int width, int channels, std::uint8_t fill = 0)
      : h(height), w(width), c(channels),
        px(static_cast<size_t>(height) * width * channels, fill) {}

  std::uint8_t& at(int y, int x, int ch) {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return px[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

/// Crop `box` out of `frame` and bilinearly resize to out_h x out_w.
/// Samples outside the frame clamp to the nearest edge pixel.
Image crop_resize(const Image& frame, const Box& box, int out_h, int out_w);

/// HWC uint8 -> 1 x C x H x W double in [-0.5, 0.5].
Tensor image_to_tensor(const Image& img);
/// Batch variant: stacks images of identical shape into N x C x H x W.
Tensor images_to_tensor(const std::vector<Image>& imgs);

/// H x W map in [0,1] -> 8-bit gray (value = round(255 * p)).
Image map_to_gray(const Tensor& map);
/// 8-bit gray -> H x W map in [0,1].
Tensor gray_to_map(const Image& img);

// overlay helpers for debug output
void draw_rect(Image& img, const Box& box, std::uint8_t r, std::uint8_t g,
               std::uint8_t b);
void blend_heat(Image& img, const Tensor& map, double alpha = 0.45);

}  // namespace langtrack
