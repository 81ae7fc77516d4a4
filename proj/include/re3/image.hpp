#pragma once

#include <cstddef>
#include <vector>

namespace re3 {

// Square single-channel image, row-major, values in [0, 1].
struct Image {
  std::size_t side = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * side + col]; }
  double& at(std::size_t row, std::size_t col) { return pixels[row * side + col]; }

  static Image blank(std::size_t side, double value = 0.0) {
    return Image{side, std::vector<double>(side * side, value)};
  }

  bool operator==(const Image&) const = default;
};

}  // namespace re3
