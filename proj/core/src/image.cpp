#include "agest/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include <fmt/format.h>
#include <jpeglib.h>
#include <jerror.h>
#include <png.h>

#include "agest/error.hpp"

namespace agest {

RawImage::RawImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {
  if (w == 0 || h == 0) throw DimensionError("image dimensions must be positive");
}

RawImage::RawImage(std::size_t w, std::size_t h, std::vector<std::uint8_t> rgb)
    : width(w), height(h), pixels(std::move(rgb)) {
  if (w == 0 || h == 0) throw DimensionError("image dimensions must be positive");
  if (pixels.size() != w * h * 3) {
    throw DimensionError(fmt::format("{}x{} RGB image needs {} bytes, got {}", w, h, w * h * 3, pixels.size()));
  }
}

std::string_view to_string(ImageFormat f) {
  switch (f) {
    case ImageFormat::png: return "png";
    case ImageFormat::jpeg: return "jpeg";
    case ImageFormat::bmp: return "bmp";
    case ImageFormat::unknown: break;
  }
  return "unknown";
}

ImageFormat sniff_format(std::span<const std::uint8_t> b) {
  if (b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0) return ImageFormat::png;
  if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return ImageFormat::jpeg;
  if (b.size() >= 2 && b[0] == 'B' && b[1] == 'M') return ImageFormat::bmp;
  return ImageFormat::unknown;
}

namespace {

// --- PNG ---------------------------------------------------------------------

RawImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("png", msg);
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw DecodeError("png", "empty image");
  }
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DecodeError("png", msg);
  }
  return RawImage(image.width, image.height, std::move(buf));
}

std::vector<std::uint8_t> write_png(const std::uint8_t* data, std::size_t w, std::size_t h, png_uint_32 format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr)) {
    throw Error(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr)) {
    throw Error(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

// --- JPEG --------------------------------------------------------------------

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_warning(j_common_ptr cinfo, int level) {
  if (level < 0 && cinfo->err->msg_code == JWRN_JPEG_EOF) jpeg_error_exit(cinfo);
}

RawImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.emit_message = jpeg_warning;

  // Everything touched after setjmp lives outside this frame's locals.
  auto out = std::make_unique<RawImage>();
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DecodeError("jpeg", err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space == JCS_CMYK || cinfo.jpeg_color_space == JCS_YCCK) {
    std::snprintf(err.message, sizeof err.message, "CMYK JPEG is not supported");
    std::longjmp(err.jump, 1);
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = cinfo.output_width;
  out->height = cinfo.output_height;
  out->pixels.resize(static_cast<std::size_t>(cinfo.output_width) * cinfo.output_height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * cinfo.output_width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  if (out->width == 0 || out->height == 0) throw DecodeError("jpeg", "empty image");
  return std::move(*out);
}

// --- BMP ---------------------------------------------------------------------

std::uint32_t rd_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}
std::uint16_t rd_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

RawImage decode_bmp(std::span<const std::uint8_t> b) {
  auto fail = [](const std::string& msg) -> RawImage { throw DecodeError("bmp", msg); };
  if (b.size() < 54) return fail("truncated header");
  const std::uint32_t data_offset = rd_u32(b, 10);
  const std::uint32_t dib_size = rd_u32(b, 14);
  if (dib_size < 40) return fail("unsupported DIB header (OS/2 bitmaps are not supported)");
  const auto width = static_cast<std::int32_t>(rd_u32(b, 18));
  const auto raw_height = static_cast<std::int32_t>(rd_u32(b, 22));
  const std::uint16_t bits = rd_u16(b, 28);
  const std::uint32_t compression = rd_u32(b, 30);
  if (width <= 0 || raw_height == 0) return fail("invalid dimensions");
  const bool top_down = raw_height < 0;
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t h = static_cast<std::size_t>(top_down ? -static_cast<std::int64_t>(raw_height) : raw_height);
  if (w > 1u << 16 || h > 1u << 16) return fail("dimensions too large");
  if (!(compression == 0 || (compression == 3 && bits == 32))) return fail("compressed bitmaps are not supported");
  if (bits != 24 && bits != 32 && bits != 8) return fail(fmt::format("{}-bit bitmaps are not supported", bits));

  std::vector<std::array<std::uint8_t, 3>> palette;
  if (bits == 8) {
    std::uint32_t colors = rd_u32(b, 46);
    if (colors == 0) colors = 256;
    const std::size_t pal_at = 14 + dib_size;
    if (colors > 256 || pal_at + colors * 4 > b.size()) return fail("truncated palette");
    for (std::uint32_t i = 0; i < colors; ++i) {
      palette.push_back({b[pal_at + i * 4 + 2], b[pal_at + i * 4 + 1], b[pal_at + i * 4]});
    }
  }
  const std::size_t stride = ((bits * w + 31) / 32) * 4;
  if (data_offset > b.size() || b.size() - data_offset < stride * h) return fail("truncated pixel data");

  RawImage img(w, h);
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = top_down ? row : h - 1 - row;
    const std::uint8_t* src = b.data() + data_offset + row * stride;
    for (std::size_t x = 0; x < w; ++x) {
      std::uint8_t* dst = img.px(x, y);
      if (bits == 8) {
        if (src[x] >= palette.size()) return fail("palette index out of range");
        std::copy_n(palette[src[x]].data(), 3, dst);
      } else {
        const std::uint8_t* p = src + x * (bits / 8);
        dst[0] = p[2];
        dst[1] = p[1];
        dst[2] = p[0];
      }
    }
  }
  return img;
}

}  // namespace

RawImage decode(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::png: return decode_png(bytes);
    case ImageFormat::jpeg: return decode_jpeg(bytes);
    case ImageFormat::bmp: return decode_bmp(bytes);
    case ImageFormat::unknown: break;
  }
  throw DecodeError("unknown", "unsupported or unrecognized image container");
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RawImage decode_file(const std::string& path) { return decode(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_png(const RawImage& img) {
  return write_png(img.pixels.data(), img.width, img.height, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png_gray(const RawImage& img) {
  std::vector<std::uint8_t> gray(img.width * img.height);
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = img.pixels[i * 3];
  return write_png(gray.data(), img.width, img.height, PNG_FORMAT_GRAY);
}

std::vector<std::uint8_t> encode_bmp(const RawImage& img) {
  const std::size_t stride = ((24 * img.width + 31) / 32) * 4;
  const std::size_t data_size = stride * img.height;
  std::vector<std::uint8_t> out(54 + data_size, 0);
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  out[0] = 'B';
  out[1] = 'M';
  put32(2, static_cast<std::uint32_t>(out.size()));
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(img.width));
  put32(22, static_cast<std::uint32_t>(img.height));
  out[26] = 1;
  out[28] = 24;
  put32(34, static_cast<std::uint32_t>(data_size));
  for (std::size_t row = 0; row < img.height; ++row) {
    const std::size_t y = img.height - 1 - row;
    std::uint8_t* dst = out.data() + 54 + row * stride;
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      dst[x * 3] = p[2];
      dst[x * 3 + 1] = p[1];
      dst[x * 3 + 2] = p[0];
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const RawImage& img, int quality) {
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw Error(std::string("jpeg encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(img.pixels.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return out;
}

// --- geometry ----------------------------------------------------------------

namespace {

// Planar float image used between the geometric steps.
struct Planes {
  std::size_t w = 0, h = 0;
  std::vector<float> v;  // [3][h][w]

  float at(std::size_t c, std::size_t x, std::size_t y) const { return v[(c * h + y) * w + x]; }
  float& at(std::size_t c, std::size_t x, std::size_t y) { return v[(c * h + y) * w + x]; }
};

Planes to_planes(const RawImage& img) {
  Planes p{img.width, img.height, std::vector<float>(img.width * img.height * 3)};
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) p.at(c, x, y) = img.px(x, y)[c];
  return p;
}

// Bilinear sample with zero outside the image.
float sample_zero_fill(const Planes& p, std::size_t c, double sx, double sy) {
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const double fx = sx - fx0, fy = sy - fy0;
  const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
  auto get = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> double {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(p.w) || y >= static_cast<std::ptrdiff_t>(p.h)) return 0.0;
    return p.at(c, static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };
  const double top = get(x0, y0) * (1 - fx) + get(x0 + 1, y0) * fx;
  const double bot = get(x0, y0 + 1) * (1 - fx) + get(x0 + 1, y0 + 1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

Planes rotate(const Planes& src, double degrees, Interpolation interp) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = (static_cast<double>(src.w) - 1) / 2.0, cy = (static_cast<double>(src.h) - 1) / 2.0;
  Planes out{src.w, src.h, std::vector<float>(src.v.size(), 0.0f)};
  for (std::size_t y = 0; y < src.h; ++y) {
    for (std::size_t x = 0; x < src.w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      // Counter-clockwise on screen (y axis points down).
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      for (std::size_t c = 0; c < 3; ++c) {
        if (interp == Interpolation::nearest) {
          const double rx = std::round(sx), ry = std::round(sy);
          if (rx >= 0 && ry >= 0 && rx < static_cast<double>(src.w) && ry < static_cast<double>(src.h)) {
            out.at(c, x, y) = src.at(c, static_cast<std::size_t>(rx), static_cast<std::size_t>(ry));
          }
        } else {
          out.at(c, x, y) = sample_zero_fill(src, c, sx, sy);
        }
      }
    }
  }
  return out;
}

double source_coord(std::size_t dst, std::size_t in, std::size_t out) {
  if (out == 1) return (static_cast<double>(in) - 1) / 2.0;
  return static_cast<double>(dst) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

}  // namespace

Tensor crop_resize(const RawImage& img, const CropSpec& crop, const PreprocessOptions& options) {
  if (img.width == 0 || img.height == 0) throw DimensionError("crop_resize: empty image");
  if (options.target_width == 0 || options.target_height == 0) {
    throw DimensionError("crop_resize: target size must be positive");
  }
  const CropSpec rect = crop.is_full_frame() ? CropSpec{0, 0, img.width, img.height, crop.rotation_deg} : crop;
  if (rect.w == 0 || rect.h == 0 || rect.x + rect.w > img.width || rect.y + rect.h > img.height) {
    throw DimensionError(fmt::format("crop x={} y={} w={} h={} lies outside the {}x{} image", rect.x, rect.y, rect.w,
                                     rect.h, img.width, img.height));
  }

  Planes planes = to_planes(img);
  if (rect.rotation_deg != 0.0) planes = rotate(planes, rect.rotation_deg, options.interpolation);

  const std::size_t tw = options.target_width, th = options.target_height;
  Tensor out({3, th, tw});
  for (std::size_t oy = 0; oy < th; ++oy) {
    const double sy = source_coord(oy, rect.h, th);
    for (std::size_t ox = 0; ox < tw; ++ox) {
      const double sx = source_coord(ox, rect.w, tw);
      for (std::size_t c = 0; c < 3; ++c) {
        double v;
        if (options.interpolation == Interpolation::nearest) {
          v = planes.at(c, rect.x + static_cast<std::size_t>(std::lround(sx)),
                        rect.y + static_cast<std::size_t>(std::lround(sy)));
        } else {
          const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
          const std::size_t x1 = std::min(x0 + 1, rect.w - 1), y1 = std::min(y0 + 1, rect.h - 1);
          const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
          auto at = [&](std::size_t x, std::size_t y) -> double { return planes.at(c, rect.x + x, rect.y + y); };
          v = (at(x0, y0) * (1 - fx) + at(x1, y0) * fx) * (1 - fy) + (at(x0, y1) * (1 - fx) + at(x1, y1) * fx) * fy;
        }
        out.at(c, oy, ox) = static_cast<float>(v) - options.channel_mean[c];
      }
    }
  }
  return out;
}

// --- tone --------------------------------------------------------------------

std::string_view to_string(ColorCast c) {
  switch (c) {
    case ColorCast::color: return "color";
    case ColorCast::monochrome: return "monochrome";
    case ColorCast::sepia: return "sepia";
  }
  return "color";
}

RawImage apply_sepia(const RawImage& img) {
  RawImage out = img;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    for (std::size_t r = 0; r < 3; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < 3; ++c) v += kSepiaMatrix[r][c] * img.pixels[i + c];
      out.pixels[i + r] = static_cast<std::uint8_t>(std::min(255.0, std::round(v)));
    }
  }
  return out;
}

ColorCast detect_colorcast(const RawImage& img) {
  const std::size_t n = img.width * img.height;
  if (n == 0) return ColorCast::color;

  constexpr double kNeutralChroma = 4.0;
  constexpr double kConeLo = 110.0, kConeHi = 190.0;
  auto hue_deg = [](double cr, double cb) {
    double a = std::atan2(cr, cb) * 180.0 / std::numbers::pi;
    return a < 0 ? a + 360.0 : a;
  };

  std::size_t grey = 0, warm_or_neutral = 0;
  double sum_cr = 0.0, sum_cb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = &img.pixels[i * 3];
    const int spread = std::max({p[0], p[1], p[2]}) - std::min({p[0], p[1], p[2]});
    grey += spread <= 2;
    const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    const double cr = p[0] - y, cb = p[2] - y;
    sum_cr += cr;
    sum_cb += cb;
    const double hue = hue_deg(cr, cb);
    if (std::hypot(cr, cb) <= kNeutralChroma || (hue >= kConeLo && hue <= kConeHi)) ++warm_or_neutral;
  }
  const double dn = static_cast<double>(n);
  if (static_cast<double>(grey) >= 0.99 * dn) return ColorCast::monochrome;

  const double mcr = sum_cr / dn, mcb = sum_cb / dn;
  const double mean_hue = hue_deg(mcr, mcb);
  if (std::hypot(mcr, mcb) >= kNeutralChroma && mean_hue >= kConeLo && mean_hue <= kConeHi &&
      static_cast<double>(warm_or_neutral) >= 0.95 * dn) {
    return ColorCast::sepia;
  }
  return ColorCast::color;
}

}  // namespace agest
