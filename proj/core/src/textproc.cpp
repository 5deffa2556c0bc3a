#include "clipc/textproc.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <climits>
#include <cmath>
#include <stdexcept>

#include "clipc/dataset.hpp"
#include "clipc/error.hpp"

namespace clipc {

namespace {

std::string utf8_encode(std::uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xc0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  }
  return out;
}

// Printable bytes map to themselves; the rest are shifted past 255.
const std::array<std::string, 256>& byte_symbols() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    std::uint32_t extra = 0;
    for (std::uint32_t b = 0; b < 256; ++b) {
      const bool printable = (b >= '!' && b <= '~') || (b >= 0xa1 && b <= 0xac) || (b >= 0xae);
      t[b] = utf8_encode(printable ? b : 256 + extra++);
    }
    return t;
  }();
  return table;
}

enum class CharClass { kLetter, kDigit, kSpace, kOther };

CharClass classify(unsigned char c) {
  if (std::isalpha(c) || c >= 0x80) return CharClass::kLetter;
  if (std::isdigit(c)) return CharClass::kDigit;
  if (std::isspace(c)) return CharClass::kSpace;
  return CharClass::kOther;
}

// ASCII rendition of the usual pre-tokenizer: contractions, letter runs,
// single digits, runs of other symbols.
std::vector<std::string> pretokenize(std::string_view text) {
  static constexpr std::string_view kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == CharClass::kSpace) {
      ++i;
      continue;
    }
    if (text[i] == '\'') {
      bool matched = false;
      for (auto c : kContractions) {
        if (text.substr(i, c.size()) == c) {
          words.emplace_back(c);
          i += c.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    std::size_t j = i + 1;
    if (cls == CharClass::kLetter) {
      while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == CharClass::kLetter) ++j;
    } else if (cls == CharClass::kOther) {
      while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == CharClass::kOther) ++j;
    }
    words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

}  // namespace

BpeVocabulary::BpeVocabulary(std::vector<std::string> tokens,
                             std::vector<std::pair<std::string, std::string>> merges,
                             const SpecialTokens& specials)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw DataError("duplicate vocabulary token: " + tokens_[i], i + 1);
  }
  for (std::size_t r = 0; r < merges.size(); ++r) {
    const auto& [l, rt] = merges[r];
    if (!ids_.contains(l) || !ids_.contains(rt) || !ids_.contains(l + rt))
      throw DataError("merge refers to out-of-vocabulary symbol: " + l + " " + rt, r + 1);
    merge_ranks_.emplace(l + ' ' + rt, static_cast<std::int32_t>(r));
  }
  auto special = [&](const std::string& s) {
    const auto it = ids_.find(s);
    if (it == ids_.end()) throw DataError("special token missing from vocabulary: " + s);
    return it->second;
  };
  start_id_ = special(specials.start);
  end_id_ = special(specials.end);
  pad_id_ = special(specials.pad);
  if (start_id_ == end_id_ || start_id_ == pad_id_ || end_id_ == pad_id_)
    throw DataError("special token ids must be distinct");
}

BpeVocabulary BpeVocabulary::load(const std::filesystem::path& vocab_file, const std::filesystem::path& merges_file,
                                  const SpecialTokens& specials) {
  auto tokens = read_lines(vocab_file);
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t lineno = 0;
  for (const auto& line : read_lines(merges_file)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("#version")) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() || line.find(' ', sp + 1) != std::string::npos)
      throw DataError("malformed merge record in " + merges_file.string(), lineno);
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return BpeVocabulary(std::move(tokens), std::move(merges), specials);
}

std::vector<std::string> BpeVocabulary::bpe(std::string_view word) const {
  std::vector<std::string> symbols;
  for (unsigned char c : word) symbols.push_back(byte_symbols()[c]);
  if (symbols.empty()) return symbols;
  symbols.back() += "</w>";

  while (symbols.size() > 1) {
    std::int32_t best = INT32_MAX;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_ranks_.find(symbols[i] + ' ' + symbols[i + 1]);
      if (it != merge_ranks_.end() && it->second < best) {
        best = it->second;
        best_at = i;
      }
    }
    if (best == INT32_MAX) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(symbols[i]);
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  return symbols;
}

std::vector<TokenId> BpeVocabulary::encode(std::string_view normalized) const {
  std::vector<TokenId> out;
  for (const auto& word : pretokenize(normalized)) {
    for (const auto& sym : bpe(word)) {
      const auto it = ids_.find(sym);
      if (it == ids_.end()) throw std::invalid_argument("symbol not in vocabulary: " + sym);
      out.push_back(it->second);
    }
  }
  return out;
}

HashedWordVocabulary::HashedWordVocabulary(std::int32_t buckets) : buckets_(buckets) {
  if (buckets < 1) throw ConfigError("hashed vocabulary needs at least one bucket");
  pad_id_ = 0;
  start_id_ = 1;
  end_id_ = 2;
}

std::vector<TokenId> HashedWordVocabulary::encode(std::string_view normalized) const {
  std::vector<TokenId> out;
  for (const auto& w : split_words(normalized))
    out.push_back(3 + static_cast<TokenId>(fnv1a(w) % static_cast<std::uint64_t>(buckets_)));
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int context_length) {
  if (context_length < 3) throw std::invalid_argument("context_length must be >= 3");
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw std::invalid_argument("cannot tokenize empty text");
  auto content = vocab.encode(norm);
  const auto max_content = static_cast<std::size_t>(context_length - 2);
  if (content.size() > max_content) content.resize(max_content);

  TokenSequence seq;
  seq.ids.assign(static_cast<std::size_t>(context_length), vocab.pad_id());
  seq.ids[0] = vocab.start_id();
  std::copy(content.begin(), content.end(), seq.ids.begin() + 1);
  seq.eot_index = static_cast<int>(content.size()) + 1;
  seq.ids[static_cast<std::size_t>(seq.eot_index)] = vocab.end_id();
  return seq;
}

std::string compose_captions(std::string_view a, std::string_view b, OrderFlag order) {
  if (a.empty() || b.empty()) throw std::invalid_argument("compose_captions: empty caption");
  const auto& first = order == OrderFlag::kAFirst ? a : b;
  const auto& second = order == OrderFlag::kAFirst ? b : a;
  std::string out;
  out.reserve(a.size() + b.size() + 5);
  out.append(first).append(" and ").append(second);
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

void eda_swap(std::vector<std::string>& words, std::size_t i, std::size_t j) {
  if (i >= words.size() || j >= words.size()) throw std::out_of_range("eda_swap: position out of range");
  std::swap(words[i], words[j]);
}

std::string eda_apply(std::string_view caption, EdaOp op, Rng& rng, double strength) {
  if (strength < 0.0 || strength > 1.0) throw std::invalid_argument("eda strength must be in [0, 1]");
  auto words = split_words(caption);
  if (words.empty()) throw std::invalid_argument("eda: caption has no words");
  const auto n = words.size();
  auto k = static_cast<std::size_t>(std::ceil(strength * static_cast<double>(n)));
  if (k == 0) return std::string(caption);

  switch (op) {
    case EdaOp::kSwap:
      if (n < 2) break;
      for (std::size_t t = 0; t < k; ++t) {
        const auto i = rng.below(n);
        auto j = rng.below(n - 1);
        if (j >= i) ++j;
        eda_swap(words, i, j);
      }
      break;
    case EdaOp::kDelete:
      k = std::min(k, n - 1);
      for (std::size_t t = 0; t < k; ++t) words.erase(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size())));
      break;
    case EdaOp::kInsert:
      for (std::size_t t = 0; t < k; ++t) {
        const std::string dup = words[rng.below(words.size())];
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)), dup);
      }
      break;
  }
  return join_words(words);
}

std::string eda_augment(std::string_view caption, Rng& rng, double strength) {
  const auto op = static_cast<EdaOp>(rng.below(3));
  return eda_apply(caption, op, rng, strength);
}

}  // namespace clipc
