#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "clipc/dataset.hpp"
#include "clipc/eval.hpp"
#include "clipc/textproc.hpp"
#include "clipc/trainer.hpp"

namespace clipc {

struct TokenizerConfig {
  std::string kind = "hashed";  // "hashed" or "bpe"
  int buckets = 4096;
  std::filesystem::path vocab;
  std::filesystem::path merges;
  SpecialTokens specials;
};

struct ProbeSettings {
  std::filesystem::path manifest;
  std::filesystem::path labels;
  std::filesystem::path classes;
  std::filesystem::path templates;

  bool enabled() const { return !manifest.empty(); }
};

/// Everything a CLI invocation can configure. Paths are resolved against
/// the directory of the config file.
struct RunConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> labels;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = "runs";
  TrainConfig train;
  SyntheticConfig synthetic;
  std::optional<std::uint64_t> synthetic_seed;
  TokenizerConfig tokenizer;
  ProbeSettings probe;
  ProbeConfig linear_probe;
};

/// JSON with comments allowed. Unknown keys and type errors raise
/// ConfigError naming the dotted field path.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

/// Fully resolved config, pretty-printed with sorted keys.
std::string resolved_config_json(const RunConfig& config);

std::unique_ptr<Vocabulary> make_vocabulary(const TokenizerConfig& config);

/// Copies vocabulary size and end-of-text id into the text encoder config.
void bind_vocabulary(const Vocabulary& vocab, EncoderConfig& encoder);

std::string encoder_config_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const std::string& text);

}  // namespace clipc
