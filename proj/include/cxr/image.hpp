#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cxr {

// 8-bit image with interleaved channels. Three-channel images are RGB.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return pixels.empty(); }

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Decodes any format the image codec library understands. Alpha is dropped;
// deeper-than-8-bit images are scaled to 8 bits. Throws IoError.
Image load_image(const std::filesystem::path& path);
std::optional<Image> try_load_image(const std::filesystem::path& path);

// Lossless PNG with a fixed compression level, so equal images give equal bytes.
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace cxr
