#pragma once

#include <array>

#include "clipc/image.hpp"
#include "clipc/rng.hpp"

namespace clipc {

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

struct AugmentConfig {
  int out_size = 224;
  double scale_low = 0.6;
  double scale_high = 1.0;
  double ratio_low = 3.0 / 4.0;
  double ratio_high = 4.0 / 3.0;
  std::array<float, 3> mean = kImageNetMean;
  std::array<float, 3> std = kImageNetStd;

  void validate() const;
};

enum class Axis { kHorizontal, kVertical };

struct Region {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

/// Bicubic resampling of `region` of `img` to out_h x out_w. Uses a
/// separable kernel (a = -0.5) whose support widens when downsampling, so it
/// antialiases like the usual PIL filter. Same-size resampling is the
/// identity. Raw-stage outputs are clamped to [0, 255].
ImageTensor resample_bicubic(const ImageTensor& img, const Region& region, int out_h, int out_w);

/// Samples area fraction and log-uniform aspect ratio (10 attempts, then a
/// center crop clamped to the ratio range), crops and resizes to out_size.
ImageTensor random_resized_crop(const ImageTensor& img, const AugmentConfig& cfg, Rng& rng);

/// The crop window `random_resized_crop` would use.
Region sample_crop_region(int height, int width, const AugmentConfig& cfg, Rng& rng);

ImageTensor resize_eval(const ImageTensor& img, int size);

/// (x / 255 - mean_c) / std_c per channel; raw stage only.
ImageTensor normalize(const ImageTensor& img, const std::array<float, 3>& mean, const std::array<float, 3>& std);

/// Side-by-side (horizontal) or stacked (vertical) concatenation of the
/// center halves of two S x S images. Pure copies, no interpolation.
ImageTensor compose_center_half(const ImageTensor& a, const ImageTensor& b, Axis axis);

/// omega * a + (1 - omega) * b.
ImageTensor mixup(const ImageTensor& a, const ImageTensor& b, double omega);

/// Rectangle of round(alpha H) x round(alpha W), alpha = sqrt(1 - omega),
/// placed uniformly so that it lies fully inside an H x W image.
Region cutmix_region(int height, int width, double omega, Rng& rng);

/// `a` with `region` replaced by the pixels of `b` at the same location.
ImageTensor paste_region(const ImageTensor& a, const ImageTensor& b, const Region& region);

ImageTensor cutmix(const ImageTensor& a, const ImageTensor& b, double omega, Rng& rng);

}  // namespace clipc
