#include "sseg/image.hpp"

#include <cmath>

namespace sseg {

std::uint8_t luma_byte(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  // nearbyint under the default FP environment rounds half to even.
  const double rounded = std::nearbyint(y);
  if (rounded <= 0.0) return 0;
  if (rounded >= 255.0) return 255;
  return static_cast<std::uint8_t>(rounded);
}

}  // namespace sseg
