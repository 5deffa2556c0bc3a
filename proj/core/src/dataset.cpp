#include "clipc/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "clipc/error.hpp"

namespace clipc {

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw DataError("malformed manifest record in " + path.string(), lineno);
    std::string caption = line.substr(tab + 1);
    if (caption.find('\t') != std::string::npos)
      throw DataError("manifest record has more than two fields in " + path.string(), lineno);
    m.entries.push_back({line.substr(0, tab), std::move(caption)});
  }
  if (m.size() < 2)
    throw DataError("manifest needs at least 2 entries, found " + std::to_string(m.size()) + ": " + path.string());
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& e : manifest.entries) out << e.image.generic_string() << '\t' << e.caption << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Sample get_sample(const DatasetManifest& manifest, std::size_t index) {
  if (index >= manifest.size())
    throw std::out_of_range("sample index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(manifest.size()) + ")");
  const auto& entry = manifest.entries[index];
  return {index, read_image(manifest.root / entry.image), entry.caption};
}

ImageDataset::ImageDataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  samples_.reserve(manifest_.size());
  for (std::size_t i = 0; i < manifest_.size(); ++i) samples_.push_back(get_sample(manifest_, i));
}

const Sample& ImageDataset::operator[](std::size_t index) const {
  if (index >= samples_.size())
    throw std::out_of_range("sample index " + std::to_string(index) + " out of range");
  return samples_[index];
}

std::vector<SyntheticLabel> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("labels file not found: " + path.string());
  std::vector<SyntheticLabel> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    for (const auto& f : fields)
      if (f.empty()) throw DataError("empty field in labels file " + path.string(), lineno);
    if (fields.size() == 3)
      labels.push_back({fields[0], fields[1], fields[2]});
    else if (fields.size() == 2)
      labels.push_back({fields[0], fields[1], ""});
    else
      throw DataError("labels record needs 2 or 3 fields in " + path.string(), lineno);
  }
  return labels;
}

std::string label_class(const SyntheticLabel& label) {
  return label.color.empty() ? label.shape : label.color + " " + label.shape;
}

}  // namespace clipc
