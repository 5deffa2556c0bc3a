#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clipc/rng.hpp"

namespace clipc {

using TokenId = std::int32_t;

struct SpecialTokens {
  std::string start = "<|startoftext|>";
  std::string end = "<|endoftext|>";
  std::string pad = "<|pad|>";
};

/// Maps normalized text to content token ids (no start/end markers).
class Vocabulary {
 public:
  virtual ~Vocabulary() = default;

  virtual std::vector<TokenId> encode(std::string_view normalized) const = 0;
  virtual std::int32_t size() const = 0;

  TokenId start_id() const { return start_id_; }
  TokenId end_id() const { return end_id_; }
  TokenId pad_id() const { return pad_id_; }

 protected:
  TokenId start_id_ = 0;
  TokenId end_id_ = 0;
  TokenId pad_id_ = 0;
};

/// Byte-pair encoder over the common two-file format: `vocab.txt` (one
/// token per line, id = line index) and `merges.txt` (one "left right" pair
/// per line, rank = line index; an optional leading `#version` line is
/// ignored). Word-final symbols carry the `</w>` suffix and bytes are mapped
/// through the usual printable byte-to-unicode table.
class BpeVocabulary final : public Vocabulary {
 public:
  static BpeVocabulary load(const std::filesystem::path& vocab_file, const std::filesystem::path& merges_file,
                            const SpecialTokens& specials = {});

  BpeVocabulary(std::vector<std::string> tokens, std::vector<std::pair<std::string, std::string>> merges,
                const SpecialTokens& specials = {});

  std::vector<TokenId> encode(std::string_view normalized) const override;
  std::int32_t size() const override { return static_cast<std::int32_t>(tokens_.size()); }

  /// BPE symbols for one pre-tokenized word, before id lookup.
  std::vector<std::string> bpe(std::string_view word) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::unordered_map<std::string, std::int32_t> merge_ranks_;  // key: left + ' ' + right
};

/// Word-level fallback: whitespace split, ids hashed into `buckets` slots
/// after the three reserved ids (pad = 0, start = 1, end = 2).
class HashedWordVocabulary final : public Vocabulary {
 public:
  explicit HashedWordVocabulary(std::int32_t buckets = 4096);

  std::vector<TokenId> encode(std::string_view normalized) const override;
  std::int32_t size() const override { return buckets_ + 3; }

 private:
  std::int32_t buckets_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  int eot_index = 0;
};

inline constexpr int kDefaultContextLength = 77;

/// Lower-case (ASCII) and collapse runs of whitespace; trims both ends.
std::string normalize_text(std::string_view text);

/// Encodes `text` as [start, content..., end, pad...] of exactly
/// `context_length` ids. Overlong content is truncated and the end token
/// occupies the final slot.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int context_length = kDefaultContextLength);

enum class OrderFlag { kAFirst, kBFirst };

/// Joins two captions with " and ".
std::string compose_captions(std::string_view a, std::string_view b, OrderFlag order);

std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

/// Lexicon-free caption perturbations.
enum class EdaOp { kSwap, kDelete, kInsert };

void eda_swap(std::vector<std::string>& words, std::size_t i, std::size_t j);

/// Applies `op` at ceil(strength * num_words) positions. Deletion always
/// leaves at least one word.
std::string eda_apply(std::string_view caption, EdaOp op, Rng& rng, double strength);

/// Picks one op uniformly, then `eda_apply`.
std::string eda_augment(std::string_view caption, Rng& rng, double strength);

}  // namespace clipc
