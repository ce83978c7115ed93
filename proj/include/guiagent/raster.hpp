#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "guiagent/errors.hpp"

namespace guiagent {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class ImageError : public Error {
 public:
  using Error::Error;
};

// 8-bit RGB image, row-major, no padding.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }
  std::span<const std::uint8_t> bytes() const { return pixels_; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  // Drawing primitives clip silently to the raster.
  void fill_rect(int left, int top, int right, int bottom, Rgb c);
  void stroke_rect(int left, int top, int right, int bottom, int thickness, Rgb c);
  // Draws with the built-in 5x7 font; each glyph cell is 6*scale wide.
  void draw_text(int x, int y, std::string_view text, int scale, Rgb c);

  // [left, right) x [top, bottom), must lie inside the raster.
  Raster crop(int left, int top, int right, int bottom) const;

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Width in pixels of text rendered by draw_text at the given scale.
int text_width(std::string_view text, int scale);
inline constexpr int kGlyphHeight = 7;

std::vector<std::uint8_t> encode_png(const Raster& image);
Raster decode_png(std::span<const std::uint8_t> png);

}  // namespace guiagent
