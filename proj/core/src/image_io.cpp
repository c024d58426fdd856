#include "persyn/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace persyn {

namespace {

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::string lower_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of("/\\");
  if (dot == std::string::npos) return {};
  if (slash != std::string::npos && dot < slash) return {};
  std::string ext = path.substr(dot);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (out.good()) return;
  }
  std::remove(path.c_str());
  throw IoError("write failure on " + path);
}

// Interleaved 8-bit rows, top row first -- the layout both codecs use.
std::vector<std::uint8_t> to_rows_topdown(const RasterImage& img) {
  const int w = img.width();
  const int h = img.height();
  std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h * 3);
  std::size_t i = 0;
  for (int r = 0; r < h; ++r) {
    const int y = h - 1 - r;
    for (int x = 0; x < w; ++x) {
      rows[i++] = quantize(img.at(0, x, y));
      rows[i++] = quantize(img.at(1, x, y));
      rows[i++] = quantize(img.at(2, x, y));
    }
  }
  return rows;
}

RasterImage from_rows_topdown(std::span<const std::uint8_t> rows, int w, int h) {
  RasterImage img(w, h);
  std::size_t i = 0;
  for (int r = 0; r < h; ++r) {
    const int y = h - 1 - r;
    for (int x = 0; x < w; ++x) {
      img.at(0, x, y) = rows[i++] / 255.0;
      img.at(1, x, y) = rows[i++] / 255.0;
      img.at(2, x, y) = rows[i++] / 255.0;
    }
  }
  return img;
}

// ---- PNG ------------------------------------------------------------

struct PngByteSource {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngByteSource*>(png_get_io_ptr(png));
  if (src->pos + n > src->bytes.size()) {
    png_error(png, "unexpected end of PNG stream");
  }
  std::memcpy(out, src->bytes.data() + src->pos, n);
  src->pos += n;
}

void png_write_to_memory(png_structp png, png_bytep data, png_size_t n) {
  auto* sink = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  sink->insert(sink->end(), data, data + n);
}

void png_noop_flush(png_structp) {}

RasterImage decode_png(std::span<const std::uint8_t> bytes,
                       const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }

  PngByteSource src{bytes};
  std::string error;
  RasterImage result;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG " + path + (error.empty() ? "" : ": " + error));
  }
  png_set_read_fn(png, &src, png_read_from_memory);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));

  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": 16-bit PNG is unsupported (IHDR bit depth 16)");
  }
  if (color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
      color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": PNG alpha channel is unsupported (IHDR color type " +
                      std::to_string(color_type) + ")");
  }

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color_type == PNG_COLOR_TYPE_GRAY) png_set_gray_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": PNG transparency (tRNS) is unsupported");
  }
  if (bit_depth < 8) png_set_packing(png);
  png_read_update_info(png, info);

  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": PNG did not expand to 8-bit RGB");
  }

  std::vector<std::uint8_t> rows(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> row_ptrs(h);
  for (int r = 0; r < h; ++r) {
    row_ptrs[r] = rows.data() + static_cast<std::size_t>(r) * w * 3;
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  result = from_rows_topdown(rows, w, h);
  return result;
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }

  std::vector<std::uint8_t> sink;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed");
  }
  png_set_write_fn(png, &sink, png_write_to_memory, png_noop_flush);

  const int width = img.width();
  const int height = img.height();
  const auto rows = to_rows_topdown(img);
  const std::size_t stride = static_cast<std::size_t>(width) * 3;

  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(rows.data() + r * stride));
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  return sink;
}

// ---- PPM ------------------------------------------------------------

// Parses one whitespace/comment-separated integer token of a PNM header.
int ppm_next_int(std::span<const std::uint8_t> bytes, std::size_t& pos,
                 const std::string& path) {
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw FormatError(path + ": malformed PPM header");
  }
  long v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 1 << 26) throw FormatError(path + ": absurd PPM header value");
    ++pos;
  }
  return static_cast<int>(v);
}

RasterImage decode_ppm(std::span<const std::uint8_t> bytes,
                       const std::string& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError(path + ": not a binary PPM (expected magic P6)");
  }
  std::size_t pos = 2;
  const int w = ppm_next_int(bytes, pos, path);
  const int h = ppm_next_int(bytes, pos, path);
  const int maxval = ppm_next_int(bytes, pos, path);
  if (w < 1 || h < 1) throw FormatError(path + ": PPM with empty dimensions");
  if (maxval != 255) {
    throw FormatError(path + ": PPM maxval " + std::to_string(maxval) +
                      " unsupported (only 255)");
  }
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(path + ": malformed PPM header");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) {
    throw FormatError(path + ": truncated PPM payload");
  }
  return from_rows_topdown(bytes.subspan(pos, need), w, h);
}

std::vector<std::uint8_t> encode_ppm(const RasterImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto rows = to_rows_topdown(img);
  out.insert(out.end(), rows.begin(), rows.end());
  return out;
}

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

RasterImage load_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return decode_ppm(bytes, path);
  }
  throw FormatError(path + ": unrecognized image header (need PNG or P6 PPM)");
}

void save_image(const RasterImage& img, const std::string& path) {
  const std::string ext = lower_extension(path);
  std::vector<std::uint8_t> bytes;
  if (ext == ".png") {
    bytes = encode_png(img);
  } else if (ext == ".ppm") {
    bytes = encode_ppm(img);
  } else {
    throw FormatError(path + ": unsupported output extension (use .png or .ppm)");
  }
  write_file(path, bytes);
}

void save_gray_png(std::span<const double> plane, int width, int height,
                   const std::string& path) {
  if (width < 1 || height < 1 ||
      plane.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("gray plane size does not match dimensions");
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<std::uint8_t> sink;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed");
  }
  png_set_write_fn(png, &sink, png_write_to_memory, png_noop_flush);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(width);
  for (int r = 0; r < height; ++r) {
    const int y = height - 1 - r;
    for (int x = 0; x < width; ++x) {
      row[x] = quantize(plane[static_cast<std::size_t>(y) * width + x]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  write_file(path, sink);
}

}  // namespace persyn
