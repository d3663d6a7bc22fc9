#include "langtrack/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace langtrack {

void write_png(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3)
    throw std::invalid_argument("write_png: 1 or 3 channels only");
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
               static_cast<png_uint_32>(img.h), 8,
               img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.h));
  for (int y = 0; y < img.h; ++y)
    rows[static_cast<size_t>(y)] =
        const_cast<png_bytep>(img.px.data() + static_cast<size_t>(y) * img.w * img.c);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE)
    png_set_palette_to_rgb(png);
  png_read_update_info(png, info);
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int c = static_cast<int>(png_get_channels(png, info));
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error(path + ": unsupported channel count");
  }
  Image img(h, w, c);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] = img.px.data() + static_cast<size_t>(y) * w * c;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

Image crop_resize(const Image& frame, const Box& box, int out_h, int out_w) {
  if (!box.valid()) throw std::invalid_argument("crop_resize: degenerate box");
  Image out(out_h, out_w, frame.c);
  for (int oy = 0; oy < out_h; ++oy) {
    // sample at the center of each output pixel mapped into the box
    const double sy = box.y + (oy + 0.5) * box.h / out_h - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = box.x + (ox + 0.5) * box.w / out_w - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      const int ya = std::clamp(y0, 0, frame.h - 1);
      const int yb = std::clamp(y0 + 1, 0, frame.h - 1);
      const int xa = std::clamp(x0, 0, frame.w - 1);
      const int xb = std::clamp(x0 + 1, 0, frame.w - 1);
      for (int ch = 0; ch < frame.c; ++ch) {
        const double v =
            (1 - fy) * ((1 - fx) * frame.at(ya, xa, ch) + fx * frame.at(ya, xb, ch)) +
            fy * ((1 - fx) * frame.at(yb, xa, ch) + fx * frame.at(yb, xb, ch));
        out.at(oy, ox, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, img.c, img.h, img.w});
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        t.at(0, ch, y, x) = img.at(y, x, ch) / 255.0 - 0.5;
  return t;
}

Tensor images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int c = imgs[0].c, h = imgs[0].h, w = imgs[0].w;
  Tensor t({static_cast<int>(imgs.size()), c, h, w});
  for (size_t n = 0; n < imgs.size(); ++n) {
    const Image& img = imgs[n];
    if (img.c != c || img.h != h || img.w != w)
      throw std::invalid_argument("images_to_tensor: mixed shapes");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          t.at(static_cast<int>(n), ch, y, x) = img.at(y, x, ch) / 255.0 - 0.5;
  }
  return t;
}

Image map_to_gray(const Tensor& map) {
  if (map.ndim() != 2) throw std::invalid_argument("map_to_gray: H x W input");
  Image img(map.dim(0), map.dim(1), 1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      img.at(y, x, 0) = static_cast<std::uint8_t>(
          std::lround(255.0 * std::clamp(map.at(y, x), 0.0, 1.0)));
  return img;
}

Tensor gray_to_map(const Image& img) {
  if (img.c != 1) throw std::invalid_argument("gray_to_map: gray input only");
  Tensor t({img.h, img.w});
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) t.at(y, x) = img.at(y, x, 0) / 255.0;
  return t;
}

void draw_rect(Image& img, const Box& box, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  if (img.c != 3) return;
  const int x0 = std::clamp(static_cast<int>(std::lround(box.x)), 0, img.w - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(box.y)), 0, img.h - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(box.x + box.w)) - 1, 0, img.w - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround(box.y + box.h)) - 1, 0, img.h - 1);
  auto set = [&](int y, int x) {
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
  };
  for (int x = x0; x <= x1; ++x) {
    set(y0, x);
    set(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    set(y, x0);
    set(y, x1);
  }
}

void blend_heat(Image& img, const Tensor& map, double alpha) {
  if (img.c != 3 || map.ndim() != 2 || map.dim(0) != img.h || map.dim(1) != img.w)
    return;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const double p = std::clamp(map.at(y, x), 0.0, 1.0);
      const double mix = alpha * p;
      img.at(y, x, 0) = static_cast<std::uint8_t>(
          std::lround((1 - mix) * img.at(y, x, 0) + mix * 255.0));
      img.at(y, x, 1) = static_cast<std::uint8_t>(std::lround((1 - mix) * img.at(y, x, 1)));
      img.at(y, x, 2) = static_cast<std::uint8_t>(std::lround((1 - mix) * img.at(y, x, 2)));
    }
}

}  // namespace langtrack
