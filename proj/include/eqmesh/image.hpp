#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "eqmesh/tensor.hpp"

namespace eqmesh {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB image, row-major, interleaved. Row 0 is the top of the image.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(int row, int col, int channel) const {
    return rgb[(static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)) * 3 +
               static_cast<std::size_t>(channel)];
  }
  bool operator==(const Image8&) const = default;
};

void write_png(const Image8& image, const std::filesystem::path& path);
/// Any PNG libpng can decode, converted to 8-bit RGB.
Image8 read_png(const std::filesystem::path& path);

/// 3×H×W tensor with values in [0,1].
Tensor image_to_tensor(const Image8& image);
/// Quantizes a 3×H×W tensor (clamped to [0,1]) to 8 bits.
Image8 tensor_to_image(const Tensor& chw);

/// Exact counter-clockwise rotation by quarter turns (square images).
Image8 rotate_image_quarter(const Image8& image, int quarter_turns);

/// Stacks 3×H×W tensors into B×3×H×W.
Tensor stack_images(const std::vector<const Tensor*>& images);

}  // namespace eqmesh
