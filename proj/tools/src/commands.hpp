#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace clipc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct SynthGenArgs {
  std::optional<std::filesystem::path> config;
  std::filesystem::path out_dir;
  std::optional<std::size_t> num_samples;
  std::optional<int> resolution;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<double> rho;
  std::optional<std::string> mode;
  std::optional<std::string> image_fn;
  std::optional<std::string> modality;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::filesystem::path> run_dir;
  std::optional<std::filesystem::path> resume;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path config;
  std::string task = "zeroshot";
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> classes;
  std::optional<std::filesystem::path> templates;
  std::optional<std::filesystem::path> train_manifest;
  std::optional<std::filesystem::path> train_labels;
  std::optional<std::filesystem::path> out;
};

struct ExportArgs {
  std::vector<std::filesystem::path> inputs;
  std::vector<std::string> names;
  std::filesystem::path out;
};

/// Each command throws ConfigError for usage problems and any other
/// exception for runtime failures; `run` maps them to exit codes.
void synth_gen(const SynthGenArgs& args, std::ostream& out);
/// Returns the run directory.
std::filesystem::path train(const TrainArgs& args, std::ostream& out);
void eval(const EvalArgs& args, std::ostream& out);
/// Returns the number of data rows written.
std::size_t export_curves(const ExportArgs& args, std::ostream& out);

/// Default run directory name for a policy and seed.
std::string run_name(const std::string& mode, double rho, const std::string& image_fn, const std::string& modality,
                     std::uint64_t seed);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clipc::cli
