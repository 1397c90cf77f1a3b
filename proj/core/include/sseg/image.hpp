#pragma once

#include <cstdint>
#include <vector>

#include "sseg/error.hpp"

namespace sseg {

// 8-bit grayscale page or patch, row-major. 0 is black ink, 255 white paper.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(checked_count(w, h), fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  static std::size_t checked_count(int w, int h) {
    if (w <= 0 || h <= 0) throw shape_error("image dimensions must be positive");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

// Binary per-pixel label, 1 = handwritten text. Dimensions always match the
// paired GrayImage.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // values in {0, 1}

  MaskImage() = default;
  MaskImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(GrayImage::checked_count(w, h), fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count_ones() const {
    std::size_t n = 0;
    for (auto v : pixels) n += (v != 0);
    return n;
  }
};

// Rec.601 luma with banker's rounding, the deterministic ingestion rule for
// color sources.
std::uint8_t luma_byte(std::uint8_t r, std::uint8_t g, std::uint8_t b);

}  // namespace sseg
