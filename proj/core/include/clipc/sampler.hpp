#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipc/dataset.hpp"
#include "clipc/imageproc.hpp"
#include "clipc/textproc.hpp"

namespace clipc {

enum class CompositionMode { kNone, kDynamic, kFixed, kStylistic };
enum class Modality { kBoth, kTextOnly, kImageOnly };
enum class ImageFn { kCenterHalf, kCutMix, kMixUp };

struct CompositionPolicy {
  CompositionMode mode = CompositionMode::kDynamic;
  double rho = 0.3;
  Modality modality = Modality::kBoth;
  ImageFn image_fn = ImageFn::kCenterHalf;
  double eda_strength = 0.1;  // stylistic mode only

  void validate() const;
  bool operator==(const CompositionPolicy&) const = default;
};

std::string to_string(CompositionMode mode);
std::string to_string(Modality modality);
std::string to_string(ImageFn fn);
CompositionMode parse_mode(const std::string& s);
Modality parse_modality(const std::string& s);
ImageFn parse_image_fn(const std::string& s);

struct SlotPlan {
  std::size_t primary = 0;
  bool composed = false;
  std::optional<std::size_t> partner;
  OrderFlag order = OrderFlag::kAFirst;
  Axis axis = Axis::kHorizontal;
  double omega = 1.0;       // mixing weight for mixup / cutmix
  std::uint64_t key = 0;    // root of this slot's keyed streams

  bool operator==(const SlotPlan&) const = default;
};

struct BatchPlan {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<SlotPlan> slots;

  std::size_t composed_count() const;
  bool operator==(const BatchPlan&) const = default;
};

/// partner[i] is the fixed partner of example i.
using PartnerMap = std::vector<std::size_t>;

/// Seeded shuffle followed by fixed-point repair (a fixed point swaps its
/// target with the next index). The result is a derangement.
PartnerMap build_fixed_pairing(std::size_t dataset_size, std::uint64_t seed);

/// Root key for slot `slot` of (epoch, step); every per-slot draw hangs off
/// this key, so plans are independent of evaluation order.
std::uint64_t slot_key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step, std::uint64_t slot);

Rng slot_stream(std::uint64_t key, Stream purpose);

inline constexpr int kMaxPartnerRetries = 64;

BatchPlan plan_batch(std::uint64_t epoch, std::uint64_t step, std::span<const std::size_t> slot_indices,
                     const CompositionPolicy& policy, std::size_t dataset_size, std::uint64_t seed,
                     const PartnerMap* fixed_pairing = nullptr);

struct Batch {
  std::vector<ImageTensor> images;   // normalized, S x S each
  std::vector<TokenSequence> tokens;
  std::vector<bool> composed_mask;

  std::size_t size() const { return images.size(); }
};

/// Pipeline settings shared by every slot.
struct PipelineConfig {
  AugmentConfig augment;
  int context_length = kDefaultContextLength;
};

/// The image a plain slot would receive: random crop of the primary under
/// its kCropA stream, then normalization.
ImageTensor augment_view(const RasterImage& img, const PipelineConfig& cfg, Rng rng);

Batch assemble_batch(const BatchPlan& plan, const ImageDataset& dataset, const Vocabulary& vocab,
                     const PipelineConfig& cfg, const CompositionPolicy& policy);

}  // namespace clipc
