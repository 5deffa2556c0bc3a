#pragma once

#include <filesystem>

#include "clipc/trainer.hpp"

namespace clipc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: magic, version, JSON header (encoder config echo,
/// counters, parameter names and shapes), then raw little-endian doubles for
/// each parameter followed by its optimizer moments.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Throws DataError on a malformed file or a version mismatch.
TrainState load_checkpoint(const std::filesystem::path& path);

/// As above, and throws ConfigError when the stored encoder config differs
/// from `expected`.
TrainState load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace clipc
