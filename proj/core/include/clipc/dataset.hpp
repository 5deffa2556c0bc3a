#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clipc/image.hpp"

namespace clipc {

struct ManifestEntry {
  std::filesystem::path image;  // relative to the manifest root
  std::string caption;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
};

struct Sample {
  std::size_t index = 0;
  RasterImage image;
  std::string caption;
};

/// Parses a `<relative-image-path>\t<caption>` manifest. Blank lines are
/// skipped; anything else without both fields is a DataError naming the line.
DatasetManifest load_manifest(const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Decodes entry `index` from disk.
Sample get_sample(const DatasetManifest& manifest, std::size_t index);

/// A manifest with every image decoded up front. Immutable after
/// construction, so concurrent readers are fine.
class ImageDataset {
 public:
  explicit ImageDataset(DatasetManifest manifest);

  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t index) const;
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<Sample> samples_;
};

struct SyntheticConfig {
  std::size_t num_samples = 4096;
  int resolution = 64;
  std::vector<std::string> shape_set{"square", "circle", "triangle", "diamond",
                                     "cross",  "star",   "hexagon",  "ring"};
  std::vector<std::string> color_set{"red", "green", "blue", "yellow", "cyan", "magenta", "white", "orange"};
  std::vector<std::string> caption_templates{
      "a photo of a {color} {shape}",
      "a {color} {shape}",
      "a drawing of a {color} {shape}",
      "a {shape} colored {color}",
      "a small {color} {shape} on a dark background",
  };
  std::array<std::uint8_t, 3> background{24, 24, 24};
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Per-image construction metadata (the labels.tsv row).
struct SyntheticLabel {
  std::filesystem::path image;
  std::string shape;
  std::string color;
};

/// Renders the dataset into `out_dir`: `images/NNNNNN.ppm`, `manifest.tsv`,
/// `labels.tsv` and `classes.txt` (one "<color> <shape>" per line). The
/// output is a pure function of the config.
DatasetManifest generate_synthetic(const SyntheticConfig& config, const std::filesystem::path& out_dir);

/// Renders a single shape image; exposed for tests.
RasterImage render_shape(const std::string& shape, std::array<std::uint8_t, 3> rgb,
                         std::array<std::uint8_t, 3> background, int resolution, double cx, double cy,
                         double radius);

std::array<std::uint8_t, 3> color_rgb(const std::string& name);
const std::vector<std::string>& supported_shapes();

/// Reads `labels.tsv`. Accepts the three-column synthetic form
/// (`path\tshape\tcolor`) or a two-column `path\tclass name` form, in which
/// case `shape` holds the class name and `color` is empty.
std::vector<SyntheticLabel> load_labels(const std::filesystem::path& path);

/// Class name for a label row: "<color> <shape>", or the bare class name for
/// two-column label files.
std::string label_class(const SyntheticLabel& label);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace clipc
