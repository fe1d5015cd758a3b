#include "eqmesh/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace eqmesh {

void write_png(const Image8& image, const std::filesystem::path& path) {
  if (image.width < 1 || image.height < 1 ||
      image.rgb.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height) * 3)
    throw ImageError("write_png: malformed image");
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(image.width);
  pi.height = static_cast<png_uint_32>(image.height);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, image.rgb.data(), 0, nullptr))
    throw ImageError("cannot write " + path.string() + ": " + pi.message);
}

Image8 read_png(const std::filesystem::path& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str()))
    throw ImageError(path.string() + ": " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  Image8 img;
  img.width = static_cast<int>(pi.width);
  img.height = static_cast<int>(pi.height);
  img.rgb.resize(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw ImageError(path.string() + ": " + msg);
  }
  return img;
}

Tensor image_to_tensor(const Image8& image) {
  const std::size_t h = static_cast<std::size_t>(image.height), w = static_cast<std::size_t>(image.width);
  std::vector<double> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) v[c * h * w + i] = image.rgb[i * 3 + c] / 255.0;
  return Tensor::from({3, h, w}, std::move(v));
}

Image8 tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ImageError("tensor_to_image expects 3×H×W");
  const std::size_t h = chw.dim(1), w = chw.dim(2);
  Image8 img{static_cast<int>(w), static_cast<int>(h), std::vector<std::uint8_t>(3 * h * w)};
  const auto d = chw.data();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i)
      img.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(d[c * h * w + i], 0.0, 1.0) * 255.0));
  return img;
}

Image8 rotate_image_quarter(const Image8& image, int quarter_turns) {
  if (image.width != image.height) throw ImageError("quarter-turn rotation needs a square image");
  const int n = image.width;
  const int q = ((quarter_turns % 4) + 4) % 4;
  Image8 out = image;
  for (int t = 0; t < q; ++t) {
    Image8 next = out;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int c = 0; c < 3; ++c)
          next.rgb[(static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)) * 3 +
                   static_cast<std::size_t>(c)] = out.at(j, n - 1 - i, c);
    out = std::move(next);
  }
  return out;
}

Tensor stack_images(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw ShapeError("stack_images: empty batch");
  const Shape s = images.front()->shape();
  std::vector<double> v;
  v.reserve(images.size() * numel(s));
  for (const auto* t : images) {
    if (t->shape() != s) throw ShapeError("stack_images: images differ in shape");
    v.insert(v.end(), t->data().begin(), t->data().end());
  }
  Shape out{images.size()};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor::from(std::move(out), std::move(v));
}

}  // namespace eqmesh
