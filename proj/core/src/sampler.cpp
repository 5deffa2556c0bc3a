#include "clipc/sampler.hpp"

#include <numeric>
#include <stdexcept>

#include "clipc/error.hpp"

namespace clipc {

void CompositionPolicy::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("policy.rho must be in [0, 1], got " + std::to_string(rho));
  if (!(eda_strength >= 0.0 && eda_strength <= 1.0)) throw ConfigError("policy.eda_strength must be in [0, 1]");
}

std::string to_string(CompositionMode mode) {
  switch (mode) {
    case CompositionMode::kNone: return "none";
    case CompositionMode::kDynamic: return "dynamic";
    case CompositionMode::kFixed: return "fixed";
    case CompositionMode::kStylistic: return "stylistic";
  }
  return "?";
}

std::string to_string(Modality modality) {
  switch (modality) {
    case Modality::kBoth: return "both";
    case Modality::kTextOnly: return "text";
    case Modality::kImageOnly: return "image";
  }
  return "?";
}

std::string to_string(ImageFn fn) {
  switch (fn) {
    case ImageFn::kCenterHalf: return "center_half";
    case ImageFn::kCutMix: return "cutmix";
    case ImageFn::kMixUp: return "mixup";
  }
  return "?";
}

CompositionMode parse_mode(const std::string& s) {
  for (auto m : {CompositionMode::kNone, CompositionMode::kDynamic, CompositionMode::kFixed, CompositionMode::kStylistic})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown composition mode: " + s + " (expected none|dynamic|fixed|stylistic)");
}

Modality parse_modality(const std::string& s) {
  for (auto m : {Modality::kBoth, Modality::kTextOnly, Modality::kImageOnly})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown modality: " + s + " (expected both|text|image)");
}

ImageFn parse_image_fn(const std::string& s) {
  for (auto f : {ImageFn::kCenterHalf, ImageFn::kCutMix, ImageFn::kMixUp})
    if (to_string(f) == s) return f;
  throw ConfigError("unknown image function: " + s + " (expected center_half|cutmix|mixup)");
}

std::size_t BatchPlan::composed_count() const {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.composed ? 1 : 0;
  return n;
}

PartnerMap build_fixed_pairing(std::size_t dataset_size, std::uint64_t seed) {
  if (dataset_size < 2) throw std::invalid_argument("fixed pairing needs at least 2 examples");
  PartnerMap map(dataset_size);
  std::iota(map.begin(), map.end(), std::size_t{0});
  Rng rng(derive_key({seed, static_cast<std::uint64_t>(Stream::kFixedPairing)}));
  for (std::size_t i = dataset_size - 1; i > 0; --i) std::swap(map[i], map[rng.below(i + 1)]);
  for (std::size_t i = 0; i < dataset_size; ++i)
    if (map[i] == i) std::swap(map[i], map[(i + 1) % dataset_size]);
  return map;
}

std::uint64_t slot_key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step, std::uint64_t slot) {
  return derive_key({seed, epoch, step, slot});
}

Rng slot_stream(std::uint64_t key, Stream purpose) {
  return Rng(derive_key({key, static_cast<std::uint64_t>(purpose)}));
}

BatchPlan plan_batch(std::uint64_t epoch, std::uint64_t step, std::span<const std::size_t> slot_indices,
                     const CompositionPolicy& policy, std::size_t dataset_size, std::uint64_t seed,
                     const PartnerMap* fixed_pairing) {
  policy.validate();
  if (dataset_size < 2) throw std::invalid_argument("plan_batch: dataset_size must be >= 2");
  if (policy.mode == CompositionMode::kFixed && (!fixed_pairing || fixed_pairing->size() != dataset_size))
    throw ConfigError("fixed pairing mode requires a partner map covering the dataset");

  BatchPlan plan{epoch, step, {}};
  plan.slots.reserve(slot_indices.size());
  for (std::size_t slot = 0; slot < slot_indices.size(); ++slot) {
    const std::size_t primary = slot_indices[slot];
    if (primary >= dataset_size) throw std::out_of_range("plan_batch: slot index out of range");
    SlotPlan s;
    s.primary = primary;
    s.key = slot_key(seed, epoch, step, slot);

    if (policy.mode != CompositionMode::kNone) s.composed = slot_stream(s.key, Stream::kCompose).bernoulli(policy.rho);
    if (s.composed) {
      switch (policy.mode) {
        case CompositionMode::kDynamic: {
          Rng rng = slot_stream(s.key, Stream::kPartner);
          for (int attempt = 0; attempt < kMaxPartnerRetries && !s.partner; ++attempt) {
            const auto j = static_cast<std::size_t>(rng.below(dataset_size));
            if (j != primary) s.partner = j;
          }
          if (!s.partner) throw std::runtime_error("plan_batch: partner sampling kept colliding with the primary");
          break;
        }
        case CompositionMode::kFixed: s.partner = (*fixed_pairing)[primary]; break;
        case CompositionMode::kStylistic: s.partner = primary; break;
        case CompositionMode::kNone: break;
      }
      s.order = slot_stream(s.key, Stream::kOrder).bernoulli(0.5) ? OrderFlag::kAFirst : OrderFlag::kBFirst;
      s.axis = slot_stream(s.key, Stream::kAxis).bernoulli(0.5) ? Axis::kHorizontal : Axis::kVertical;
      // omega ~ Beta(1, 1), i.e. uniform on [0, 1).
      s.omega = slot_stream(s.key, Stream::kMix).uniform();
    }
    plan.slots.push_back(s);
  }
  return plan;
}

ImageTensor augment_view(const RasterImage& img, const PipelineConfig& cfg, Rng rng) {
  return normalize(random_resized_crop(to_tensor(img), cfg.augment, rng), cfg.augment.mean, cfg.augment.std);
}

Batch assemble_batch(const BatchPlan& plan, const ImageDataset& dataset, const Vocabulary& vocab,
                     const PipelineConfig& cfg, const CompositionPolicy& policy) {
  Batch batch;
  batch.images.reserve(plan.slots.size());
  batch.tokens.reserve(plan.slots.size());
  for (const auto& slot : plan.slots) {
    const Sample& a = dataset[slot.primary];
    ImageTensor image = augment_view(a.image, cfg, slot_stream(slot.key, Stream::kCropA));
    std::string caption = a.caption;

    if (slot.composed) {
      const bool stylistic = policy.mode == CompositionMode::kStylistic;
      const Sample& b = stylistic ? a : dataset[slot.partner.value()];

      if (policy.modality != Modality::kTextOnly) {
        const ImageTensor other = augment_view(b.image, cfg, slot_stream(slot.key, Stream::kCropB));
        switch (policy.image_fn) {
          case ImageFn::kCenterHalf: image = compose_center_half(image, other, slot.axis); break;
          case ImageFn::kMixUp: image = mixup(image, other, slot.omega); break;
          case ImageFn::kCutMix: {
            Rng place = slot_stream(slot.key, Stream::kMix);
            place.next_u64();  // first draw was omega
            image = cutmix(image, other, slot.omega, place);
            break;
          }
        }
      }
      if (policy.modality != Modality::kImageOnly) {
        std::string other_caption = b.caption;
        if (stylistic) {
          Rng eda = slot_stream(slot.key, Stream::kEda);
          other_caption = eda_augment(a.caption, eda, policy.eda_strength);
        }
        caption = compose_captions(a.caption, other_caption, slot.order);
      }
    }
    batch.images.push_back(std::move(image));
    batch.tokens.push_back(tokenize(caption, vocab, cfg.context_length));
    batch.composed_mask.push_back(slot.composed);
  }
  return batch;
}

}  // namespace clipc
