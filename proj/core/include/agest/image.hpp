#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agest/tensor.hpp"

namespace agest {

// 8-bit RGB, row-major, 3 bytes per pixel.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(std::size_t w, std::size_t h);
  RawImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> rgb);

  std::uint8_t* px(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * 3]; }
  const std::uint8_t* px(std::size_t x, std::size_t y) const { return &pixels[(y * width + x) * 3]; }

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

enum class ImageFormat { png, jpeg, bmp, unknown };

std::string_view to_string(ImageFormat f);
ImageFormat sniff_format(std::span<const std::uint8_t> bytes);

// Decodes PNG, JPEG or BMP. Grayscale sources come back as R=G=B.
// Throws DecodeError naming the container format.
RawImage decode(std::span<const std::uint8_t> bytes);
RawImage decode_file(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

std::vector<std::uint8_t> encode_png(const RawImage& img);
std::vector<std::uint8_t> encode_bmp(const RawImage& img);  // 24-bit, bottom-up
std::vector<std::uint8_t> encode_jpeg(const RawImage& img, int quality = 95);
// 8-bit single-channel PNG of the red channel; for grayscale fixtures.
std::vector<std::uint8_t> encode_png_gray(const RawImage& img);

// Crop rectangle in the coordinates of the rotated image. Rotation is
// counter-clockwise about the image centre and is applied before the crop;
// the rotated canvas keeps the original size.
struct CropSpec {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;  // 0 together with h == 0 means "full frame"
  std::size_t h = 0;
  double rotation_deg = 0.0;

  static CropSpec full_frame() { return {}; }
  bool is_full_frame() const noexcept { return w == 0 && h == 0; }
  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

enum class Interpolation { bilinear, nearest };

struct PreprocessOptions {
  std::size_t target_width = 224;
  std::size_t target_height = 224;
  std::array<float, 3> channel_mean{0.0f, 0.0f, 0.0f};  // subtracted from [0,255] values
  Interpolation interpolation = Interpolation::bilinear;
};

// rotate -> crop -> resize -> to [3,H,W] float tensor in [0,255] minus the
// per-channel mean. Resizing maps corners onto corners:
//   src = dst * (in - 1) / (out - 1)
// so a same-size resize is the identity.
Tensor crop_resize(const RawImage& img, const CropSpec& crop, const PreprocessOptions& options = {});

enum class ColorCast { color, monochrome, sepia };

std::string_view to_string(ColorCast c);

// Sepia toning matrix (rows give R', G', B' from R, G, B), clamped to 255.
inline constexpr std::array<std::array<double, 3>, 3> kSepiaMatrix{{
    {0.393, 0.769, 0.189},
    {0.349, 0.686, 0.168},
    {0.272, 0.534, 0.131},
}};

RawImage apply_sepia(const RawImage& img);

// Heuristic tone classification.
//
// monochrome: at least 99% of pixels have max(R,G,B) - min(R,G,B) <= 2.
// sepia:      with per-pixel chroma cr = R - Y, cb = B - Y
//             (Y = 0.299R + 0.587G + 0.114B), the mean chroma vector has
//             magnitude >= 4 and hue atan2(cr, cb) in [110, 190] degrees, measured in [0, 360),
//             (the warm red/yellow cone), and at least 95% of pixels are
//             either nearly neutral (|chroma| <= 4) or inside that cone.
// color:      anything else.
ColorCast detect_colorcast(const RawImage& img);

}  // namespace agest
