#include "clipc/imageproc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "clipc/error.hpp"

namespace clipc {

void AugmentConfig::validate() const {
  if (out_size < 2 || out_size % 2 != 0) throw ConfigError("augment: out_size must be even and >= 2");
  if (!(scale_low > 0.0 && scale_low <= scale_high && scale_high <= 1.0))
    throw ConfigError("augment: crop scale must satisfy 0 < low <= high <= 1");
  if (!(ratio_low > 0.0 && ratio_low <= ratio_high)) throw ConfigError("augment: invalid aspect ratio range");
  for (float s : std)
    if (!(s > 0.0f)) throw ConfigError("augment: norm_std entries must be positive");
}

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::vector<int> first;           // first input index per output
  std::vector<int> count;           // taps per output
  std::vector<std::vector<float>> weights;
};

Taps make_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filterscale = std::max(scale, 1.0);
  const double support = 2.0 * filterscale;
  Taps t;
  t.first.resize(out_size);
  t.count.resize(out_size);
  t.weights.resize(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale;
    const int lo = std::max(static_cast<int>(center - support + 0.5), 0);
    const int hi = std::min(static_cast<int>(center + support + 0.5), in_size);
    std::vector<double> w;
    double total = 0.0;
    for (int x = lo; x < hi; ++x) {
      const double v = cubic((x - center + 0.5) / filterscale);
      w.push_back(v);
      total += v;
    }
    t.first[o] = lo;
    t.count[o] = hi - lo;
    for (double& v : w) t.weights[o].push_back(static_cast<float>(total != 0.0 ? v / total : 0.0));
  }
  return t;
}

void check_region(const ImageTensor& img, const Region& r) {
  if (r.height < 1 || r.width < 1 || r.top < 0 || r.left < 0 || r.top + r.height > img.height ||
      r.left + r.width > img.width)
    throw std::invalid_argument("resample region outside image");
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  }
  if (a.stage != b.stage) throw std::invalid_argument(std::string(who) + ": stage mismatch");
}

}  // namespace

ImageTensor resample_bicubic(const ImageTensor& img, const Region& region, int out_h, int out_w) {
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("resample: empty image");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resample: output must be at least 1x1");
  check_region(img, region);

  const Taps tx = make_taps(region.width, out_w);
  const Taps ty = make_taps(region.height, out_h);

  // Horizontal pass over the rows of the region.
  std::vector<float> tmp(static_cast<std::size_t>(3) * region.height * out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < region.height; ++y) {
      const float* row = &img.data[c * img.plane() + static_cast<std::size_t>(region.top + y) * img.width + region.left];
      float* dst = &tmp[(static_cast<std::size_t>(c) * region.height + y) * out_w];
      for (int o = 0; o < out_w; ++o) {
        float acc = 0.0f;
        const auto& w = tx.weights[o];
        for (int k = 0; k < tx.count[o]; ++k) acc += w[k] * row[tx.first[o] + k];
        dst[o] = acc;
      }
    }
  }

  ImageTensor out(out_h, out_w, img.stage);
  for (int c = 0; c < 3; ++c) {
    for (int o = 0; o < out_h; ++o) {
      float* dst = &out.data[c * out.plane() + static_cast<std::size_t>(o) * out_w];
      std::fill(dst, dst + out_w, 0.0f);
      const auto& w = ty.weights[o];
      for (int k = 0; k < ty.count[o]; ++k) {
        const float* src = &tmp[(static_cast<std::size_t>(c) * region.height + ty.first[o] + k) * out_w];
        for (int x = 0; x < out_w; ++x) dst[x] += w[k] * src[x];
      }
      if (img.stage == Stage::kRaw8)
        for (int x = 0; x < out_w; ++x) dst[x] = std::clamp(dst[x], 0.0f, 255.0f);
    }
  }
  return out;
}

Region sample_crop_region(int height, int width, const AugmentConfig& cfg, Rng& rng) {
  if (height < 1 || width < 1) throw std::invalid_argument("random_resized_crop: image smaller than 1x1");
  const double area = static_cast<double>(height) * width;
  const double log_lo = std::log(cfg.ratio_low);
  const double log_hi = std::log(cfg.ratio_high);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(cfg.scale_low, cfg.scale_high);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      const int top = static_cast<int>(rng.between(0, height - h));
      const int left = static_cast<int>(rng.between(0, width - w));
      return {top, left, h, w};
    }
  }
  const double in_ratio = static_cast<double>(width) / height;
  int w = width;
  int h = height;
  if (in_ratio < cfg.ratio_low) {
    h = static_cast<int>(std::lround(w / cfg.ratio_low));
  } else if (in_ratio > cfg.ratio_high) {
    w = static_cast<int>(std::lround(h * cfg.ratio_high));
  }
  h = std::clamp(h, 1, height);
  w = std::clamp(w, 1, width);
  return {(height - h) / 2, (width - w) / 2, h, w};
}

ImageTensor random_resized_crop(const ImageTensor& img, const AugmentConfig& cfg, Rng& rng) {
  if (img.stage != Stage::kRaw8) throw std::invalid_argument("random_resized_crop expects a raw image");
  const Region r = sample_crop_region(img.height, img.width, cfg, rng);
  return resample_bicubic(img, r, cfg.out_size, cfg.out_size);
}

ImageTensor resize_eval(const ImageTensor& img, int size) {
  if (img.stage != Stage::kRaw8) throw std::invalid_argument("resize_eval expects a raw image");
  return resample_bicubic(img, {0, 0, img.height, img.width}, size, size);
}

ImageTensor normalize(const ImageTensor& img, const std::array<float, 3>& mean, const std::array<float, 3>& std) {
  if (img.stage != Stage::kRaw8) throw std::invalid_argument("normalize expects a raw image");
  for (float s : std)
    if (s == 0.0f) throw std::invalid_argument("normalize: std must be non-zero");
  ImageTensor out(img.height, img.width, Stage::kNormalized);
  const std::size_t plane = img.plane();
  for (int c = 0; c < 3; ++c) {
    const float inv = 1.0f / std[c];
    for (std::size_t i = 0; i < plane; ++i) out.data[c * plane + i] = (img.data[c * plane + i] / 255.0f - mean[c]) * inv;
  }
  return out;
}

ImageTensor compose_center_half(const ImageTensor& a, const ImageTensor& b, Axis axis) {
  require_same_shape(a, b, "compose_center_half");
  if (a.height != a.width) throw std::invalid_argument("compose_center_half: images must be square");
  const int s = a.height;
  if (s % 2 != 0) throw std::invalid_argument("compose_center_half: side length must be even");
  const int half = s / 2;
  const int off = (s - half) / 2;

  ImageTensor out(s, s, a.stage);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        if (axis == Axis::kHorizontal) {
          out.at(c, y, x) = x < half ? a.at(c, y, x + off) : b.at(c, y, x - half + off);
        } else {
          out.at(c, y, x) = y < half ? a.at(c, y + off, x) : b.at(c, y - half + off, x);
        }
      }
    }
  }
  return out;
}

ImageTensor mixup(const ImageTensor& a, const ImageTensor& b, double omega) {
  require_same_shape(a, b, "mixup");
  if (!(omega >= 0.0 && omega <= 1.0)) throw std::invalid_argument("mixup: omega must be in [0, 1]");
  const auto wa = static_cast<float>(omega);
  const auto wb = static_cast<float>(1.0 - omega);
  ImageTensor out(a.height, a.width, a.stage);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = wa * a.data[i] + wb * b.data[i];
  return out;
}

Region cutmix_region(int height, int width, double omega, Rng& rng) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw std::invalid_argument("cutmix: omega must be in [0, 1]");
  const double alpha = std::sqrt(1.0 - omega);
  const int h = static_cast<int>(std::lround(alpha * height));
  const int w = static_cast<int>(std::lround(alpha * width));
  const int top = static_cast<int>(rng.between(0, height - h));
  const int left = static_cast<int>(rng.between(0, width - w));
  return {top, left, h, w};
}

ImageTensor paste_region(const ImageTensor& a, const ImageTensor& b, const Region& region) {
  require_same_shape(a, b, "cutmix");
  ImageTensor out = a;
  for (int c = 0; c < 3; ++c)
    for (int y = region.top; y < region.top + region.height; ++y)
      for (int x = region.left; x < region.left + region.width; ++x) out.at(c, y, x) = b.at(c, y, x);
  return out;
}

ImageTensor cutmix(const ImageTensor& a, const ImageTensor& b, double omega, Rng& rng) {
  require_same_shape(a, b, "cutmix");
  return paste_region(a, b, cutmix_region(a.height, a.width, omega, rng));
}

}  // namespace clipc
