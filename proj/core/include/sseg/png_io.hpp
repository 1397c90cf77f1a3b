#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sseg/image.hpp"

namespace sseg {

// Reads any 8/16-bit gray, palette or RGB(A) PNG and returns an 8-bit
// grayscale image; color sources go through the luma rule in image.hpp.
GrayImage read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, const GrayImage& img);

// Writes a MaskImage as a 0/255 grayscale PNG.
void write_png_mask(const std::string& path, const MaskImage& mask);

// Reads a 0/255 mask PNG back into {0,1} (threshold at 128).
MaskImage read_png_mask(const std::string& path);

// rgb is packed r,g,b per pixel, row-major.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

}  // namespace sseg
