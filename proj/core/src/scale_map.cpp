#include "persyn/scale_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace persyn {

static_assert(std::endian::native == std::endian::little,
              "PSM1 serialization assumes a little-endian host");

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

void ViewAngles::validate() const {
  if (!(slant_deg >= 0.0 && slant_deg < 90.0)) {
    throw DomainError("slant angle must be in [0, 90) degrees, got " +
                      std::to_string(slant_deg));
  }
  if (!(tilt_deg >= 0.0 && tilt_deg < 360.0)) {
    throw DomainError("tilt angle must be in [0, 360) degrees, got " +
                      std::to_string(tilt_deg));
  }
}

ScaleBounds scale_bounds(const ViewAngles& view) {
  view.validate();
  const double c = std::cos(view.slant_deg * kDegToRad);
  ScaleBounds b;
  b.s_max = 1.0 / c;
  b.s_min = c;
  b.s_delta = b.s_max - b.s_min;
  return b;
}

ProjectionRange projection_range(int width, int height, double tilt_deg) {
  if (width < 1 || height < 1) throw DomainError("empty projection domain");
  const double t = tilt_deg * kDegToRad;
  ProjectionRange r;
  r.y_max = (width - 1 - width / 2.0) * std::sin(t) +
            (height - 1 - height / 2.0) * std::cos(t);
  r.y_min = -r.y_max;
  r.y_delta = 2.0 * r.y_max;
  return r;
}

double local_scale(PixelCoord p, const ViewAngles& view, int width, int height) {
  if (p.x < 0 || p.x >= width || p.y < 0 || p.y >= height) {
    throw DomainError("pixel (" + std::to_string(p.x) + "," +
                      std::to_string(p.y) + ") outside " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
  const ScaleBounds b = scale_bounds(view);
  const ProjectionRange r = projection_range(width, height, view.tilt_deg);
  if (b.s_delta == 0.0 || r.y_delta == 0.0) return b.s_max;
  const double t = view.tilt_deg * kDegToRad;
  const double y_proj =
      (p.x - width / 2.0) * std::sin(t) + (p.y - height / 2.0) * std::cos(t);
  return b.s_max - (y_proj - r.y_min) * b.s_delta / r.y_delta;
}

ScaleMap::ScaleMap(int width, int height, std::vector<float> values,
                   ViewAngles view, ScaleBounds bounds)
    : width_(width),
      height_(height),
      values_(std::move(values)),
      view_(view),
      bounds_(bounds) {
  if (width_ < 1 || height_ < 1) throw DomainError("empty scale map");
  if (values_.size() != static_cast<std::size_t>(width_) * height_) {
    throw ShapeError("scale map payload does not match its dimensions");
  }
}

float ScaleMap::min_value() const {
  return *std::min_element(values_.begin(), values_.end());
}

float ScaleMap::max_value() const {
  return *std::max_element(values_.begin(), values_.end());
}

ScaleMap compute_scale_map(int width, int height, const ViewAngles& view) {
  const ScaleBounds b = scale_bounds(view);
  const ProjectionRange r = projection_range(width, height, view.tilt_deg);
  std::vector<float> values(static_cast<std::size_t>(width) * height);

  // Narrowing to float can round past the double bounds; keep the
  // stored values inside [s_min, s_max] exactly.
  float f_lo = static_cast<float>(b.s_min);
  if (static_cast<double>(f_lo) < b.s_min) f_lo = std::nextafter(f_lo, 2.0f * f_lo + 1.0f);
  float f_hi = static_cast<float>(b.s_max);
  if (static_cast<double>(f_hi) > b.s_max) f_hi = std::nextafter(f_hi, 0.0f);

  if (b.s_delta == 0.0 || r.y_delta == 0.0) {
    std::fill(values.begin(), values.end(), f_hi);
    return ScaleMap(width, height, std::move(values), view, b);
  }

  const double t = view.tilt_deg * kDegToRad;
  const double sin_t = std::sin(t);
  const double cos_t = std::cos(t);
  const double slope = b.s_delta / r.y_delta;
  std::size_t i = 0;
  for (int y = 0; y < height; ++y) {
    const double cy = (y - height / 2.0) * cos_t;
    for (int x = 0; x < width; ++x, ++i) {
      const double y_proj = (x - width / 2.0) * sin_t + cy;
      const double s = b.s_max - (y_proj - r.y_min) * slope;
      values[i] = std::clamp(static_cast<float>(std::clamp(s, b.s_min, b.s_max)),
                             f_lo, f_hi);
    }
  }
  return ScaleMap(width, height, std::move(values), view, b);
}

void save_scale_map(const ScaleMap& map, const std::string& path) {
  nlohmann::ordered_json header;
  header["width"] = map.width();
  header["height"] = map.height();
  header["sigma"] = map.view().slant_deg;
  header["tau"] = map.view().tilt_deg;
  header["smin"] = map.bounds().s_min;
  header["smax"] = map.bounds().s_max;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "PSM1\n" << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(map.values().data()),
            static_cast<std::streamsize>(map.values().size() * sizeof(float)));
  out.flush();
  if (!out.good()) {
    out.close();
    std::remove(path.c_str());
    throw IoError("write failure on " + path);
  }
}

ScaleMap load_scale_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");

  std::string magic;
  if (!std::getline(in, magic) || magic != "PSM1") {
    throw FormatError(path + ": missing PSM1 magic line");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw FormatError(path + ": missing PSM1 header line");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad PSM1 header: " + e.what());
  }
  int width, height;
  ViewAngles view;
  ScaleBounds bounds;
  try {
    width = header.at("width").get<int>();
    height = header.at("height").get<int>();
    view.slant_deg = header.at("sigma").get<double>();
    view.tilt_deg = header.at("tau").get<double>();
    bounds.s_min = header.at("smin").get<double>();
    bounds.s_max = header.at("smax").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": incomplete PSM1 header: " + e.what());
  }
  bounds.s_delta = bounds.s_max - bounds.s_min;
  if (width < 1 || height < 1) {
    throw FormatError(path + ": PSM1 header has empty dimensions");
  }

  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    throw FormatError(path + ": truncated PSM1 payload (header says " +
                      std::to_string(width) + "x" + std::to_string(height) + ")");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path + ": trailing bytes after PSM1 payload");
  }
  for (float v : values) {
    if (!(v >= bounds.s_min - 1e-9 && v <= bounds.s_max + 1e-9)) {
      throw FormatError(path + ": scale value outside the header bounds");
    }
  }
  return ScaleMap(width, height, std::move(values), view, bounds);
}

RgbsImage attach_scale_channel(const RasterImage& img, const ScaleMap& map) {
  if (img.width() != map.width() || img.height() != map.height()) {
    throw ShapeError("scale map " + std::to_string(map.width()) + "x" +
                     std::to_string(map.height()) + " does not match image " +
                     std::to_string(img.width()) + "x" +
                     std::to_string(img.height()));
  }
  const ScaleBounds& b = map.bounds();
  std::vector<double> s(img.pixel_count());
  if (b.s_max > b.s_min) {
    const double inv = 1.0 / (b.s_max - b.s_min);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double v = (map.values()[i] - b.s_min) * inv;
      s[i] = std::clamp(v, 0.0, 1.0);
    }
  } else {
    std::fill(s.begin(), s.end(), 0.5);
  }
  return RgbsImage(img, std::move(s));
}

}  // namespace persyn
