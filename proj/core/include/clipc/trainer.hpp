#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clipc/dataset.hpp"
#include "clipc/eval.hpp"
#include "clipc/imageproc.hpp"
#include "clipc/model.hpp"
#include "clipc/optim.hpp"
#include "clipc/sampler.hpp"
#include "clipc/textproc.hpp"

namespace clipc {

enum class CheckpointSelect { kBestProbe, kLast };

struct TrainConfig {
  int epochs = 40;
  int batch_size = 256;
  double base_lr = 0.003;
  double final_lr = 1e-5;
  int warmup_epochs = 5;
  AdamWConfig optimizer;  // beta1 0.9, beta2 0.98, eps 1e-8, weight decay 0.1
  std::uint64_t seed = 0;
  CompositionPolicy policy;
  EncoderConfig encoder;
  AugmentConfig augment;
  bool eval_every_epoch = true;
  int checkpoint_every = 0;  // epochs; 0 keeps only the final checkpoint
  CheckpointSelect select = CheckpointSelect::kBestProbe;

  void validate() const;
  PipelineConfig pipeline() const { return {augment, encoder.text.context_length}; }
};

/// One row of metrics.csv. Group fields are empty when the group had no
/// members during the epoch.
struct MetricsRecord {
  int epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  std::optional<double> composite_loss;
  std::optional<double> plain_loss;
  std::optional<double> composite_cossim;
  std::optional<double> plain_cossim;
  std::optional<double> probe_acc;
  std::size_t composite_count = 0;  // not serialized
  std::size_t plain_count = 0;      // not serialized
};

inline constexpr const char* kMetricsHeader =
    "epoch,lr,total,i2t,t2i,composite_loss,plain_loss,composite_cossim,plain_cossim,probe_acc";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);
std::string format_metrics_row(const MetricsRecord& r);

struct TrainState {
  int epoch = 0;  // completed epochs
  std::int64_t global_step = 0;
  std::uint64_t seed = 0;
  std::optional<double> best_probe;
  DualEncoder model;
  AdamWState optimizer;

  explicit TrainState(DualEncoder m) : model(std::move(m)) {}
};

struct TrainOptions {
  /// Writes metrics.csv and checkpoints/ here when set.
  std::optional<std::filesystem::path> run_dir;
  std::optional<std::filesystem::path> resume_from;
  const ZeroShotProbe* probe = nullptr;
  /// Stop after this epoch (simulates an interrupted run).
  std::optional<int> stop_after_epoch;
  std::function<void(const MetricsRecord&)> on_epoch;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> metrics;
};

/// Error raised when the loss turns non-finite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::int64_t step, double value);
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

/// Runs epochs x floor(size / batch) steps (partial batches dropped).
TrainResult train(const TrainConfig& config, const ImageDataset& dataset, const Vocabulary& vocab,
                  const TrainOptions& options = {});

}  // namespace clipc
