#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "clipc/dataset.hpp"
#include "clipc/error.hpp"
#include "clipc/rng.hpp"

namespace clipc {

namespace {

struct Point {
  double x, y;
};

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

std::vector<Point> regular_polygon(int sides, double r, double phase) {
  std::vector<Point> pts;
  for (int k = 0; k < sides; ++k) {
    const double t = phase + 2.0 * std::numbers::pi * k / sides;
    pts.push_back({r * std::cos(t), r * std::sin(t)});
  }
  return pts;
}

std::vector<Point> star_polygon(double r) {
  std::vector<Point> pts;
  for (int k = 0; k < 10; ++k) {
    const double rr = (k % 2 == 0) ? r : 0.45 * r;
    const double t = -std::numbers::pi / 2 + std::numbers::pi * k / 5;
    pts.push_back({rr * std::cos(t), rr * std::sin(t)});
  }
  return pts;
}

// Inside test in shape-local coordinates (origin at the shape center).
std::function<bool(double, double)> shape_predicate(const std::string& shape, double r) {
  if (shape == "square") return [r](double dx, double dy) { return std::abs(dx) <= 0.8 * r && std::abs(dy) <= 0.8 * r; };
  if (shape == "circle") return [r](double dx, double dy) { return dx * dx + dy * dy <= r * r; };
  if (shape == "diamond") return [r](double dx, double dy) { return std::abs(dx) + std::abs(dy) <= r; };
  if (shape == "cross")
    return [r](double dx, double dy) {
      const double arm = r / 3.0;
      return (std::abs(dx) <= arm && std::abs(dy) <= r) || (std::abs(dy) <= arm && std::abs(dx) <= r);
    };
  if (shape == "ring")
    return [r](double dx, double dy) {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.3 * r * r;
    };
  std::vector<Point> poly;
  if (shape == "triangle")
    poly = regular_polygon(3, r, -std::numbers::pi / 2);
  else if (shape == "hexagon")
    poly = regular_polygon(6, r, 0.0);
  else if (shape == "star")
    poly = star_polygon(r);
  else
    throw ConfigError("unsupported shape: " + shape);
  return [poly = std::move(poly)](double dx, double dy) { return inside_polygon(poly, dx, dy); };
}

const std::map<std::string, std::array<std::uint8_t, 3>>& palette() {
  static const std::map<std::string, std::array<std::uint8_t, 3>> kPalette{
      {"red", {220, 30, 30}},     {"green", {40, 190, 60}},    {"blue", {40, 80, 230}},
      {"yellow", {240, 220, 40}}, {"cyan", {40, 220, 230}},    {"magenta", {220, 50, 210}},
      {"white", {245, 245, 245}}, {"orange", {250, 140, 20}},  {"purple", {130, 50, 180}},
      {"pink", {250, 160, 190}},  {"brown", {140, 90, 40}},    {"gray", {128, 128, 128}},
  };
  return kPalette;
}

std::size_t count_occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string fill_template(std::string tmpl, const std::string& shape, const std::string& color) {
  tmpl.replace(tmpl.find("{shape}"), 7, shape);
  tmpl.replace(tmpl.find("{color}"), 7, color);
  return tmpl;
}

std::string image_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu.ppm", i);
  return buf;
}

}  // namespace

const std::vector<std::string>& supported_shapes() {
  static const std::vector<std::string> kShapes{"square", "circle", "triangle", "diamond",
                                                "cross",  "star",   "hexagon",  "ring"};
  return kShapes;
}

std::array<std::uint8_t, 3> color_rgb(const std::string& name) {
  const auto it = palette().find(name);
  if (it == palette().end()) throw ConfigError("unsupported color: " + name);
  return it->second;
}

void SyntheticConfig::validate() const {
  if (shape_set.size() < 2) throw ConfigError("synthetic: shape_set needs at least 2 shapes");
  if (color_set.size() < 2) throw ConfigError("synthetic: color_set needs at least 2 colors");
  if (resolution < 16) throw ConfigError("synthetic: resolution must be >= 16");
  if (num_samples < 2) throw ConfigError("synthetic: num_samples must be >= 2");
  if (caption_templates.empty()) throw ConfigError("synthetic: caption_templates is empty");
  std::set<std::string> seen;
  for (const auto& s : shape_set) {
    if (std::find(supported_shapes().begin(), supported_shapes().end(), s) == supported_shapes().end())
      throw ConfigError("synthetic: unsupported shape: " + s);
    if (!seen.insert(s).second) throw ConfigError("synthetic: duplicate shape: " + s);
  }
  seen.clear();
  for (const auto& c : color_set) {
    color_rgb(c);
    if (!seen.insert(c).second) throw ConfigError("synthetic: duplicate color: " + c);
  }
  for (const auto& t : caption_templates)
    if (count_occurrences(t, "{shape}") != 1 || count_occurrences(t, "{color}") != 1)
      throw ConfigError("synthetic: template must contain {shape} and {color} exactly once: " + t);
}

RasterImage render_shape(const std::string& shape, std::array<std::uint8_t, 3> rgb,
                         std::array<std::uint8_t, 3> background, int resolution, double cx, double cy,
                         double radius) {
  RasterImage img(resolution, resolution);
  const auto inside = shape_predicate(shape, radius);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const bool in = inside(x + 0.5 - cx, y + 0.5 - cy);
      const auto& px = in ? rgb : background;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = px[c];
    }
  }
  return img;
}

DatasetManifest generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir / "images");

  DatasetManifest manifest;
  manifest.root = out_dir;
  std::ofstream labels(out_dir / "labels.tsv", std::ios::binary);
  if (!labels) throw std::runtime_error("cannot write labels in " + out_dir.string());

  const double res = config.resolution;
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    Rng rng(derive_key({config.seed, static_cast<std::uint64_t>(Stream::kSynthetic), i}));
    const auto& shape = config.shape_set[rng.below(config.shape_set.size())];
    const auto& color = config.color_set[rng.below(config.color_set.size())];
    const auto& tmpl = config.caption_templates[rng.below(config.caption_templates.size())];
    const double radius = rng.uniform(0.22, 0.32) * res;
    const double cx = rng.uniform(radius, res - radius);
    const double cy = rng.uniform(radius, res - radius);

    const auto name = image_name(i);
    write_ppm(render_shape(shape, color_rgb(color), config.background, config.resolution, cx, cy, radius),
              out_dir / name);
    manifest.entries.push_back({name, fill_template(tmpl, shape, color)});
    labels << name << '\t' << shape << '\t' << color << '\n';
  }
  if (!labels) throw std::runtime_error("write failed: labels.tsv");

  std::ofstream classes(out_dir / "classes.txt", std::ios::binary);
  for (const auto& s : config.shape_set)
    for (const auto& c : config.color_set) classes << c << ' ' << s << '\n';
  if (!classes) throw std::runtime_error("write failed: classes.txt");

  write_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace clipc
