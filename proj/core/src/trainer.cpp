#include "clipc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "clipc/checkpoint.hpp"
#include "clipc/error.hpp"
#include "clipc/loss.hpp"
#include "clipc/rng.hpp"

namespace clipc {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("train.warmup_epochs must be in [0, epochs)");
  if (!(base_lr > 0.0) || !(final_lr >= 0.0)) throw ConfigError("train: learning rates must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (optimizer.weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (optimizer.grad_clip && !(*optimizer.grad_clip > 0.0)) throw ConfigError("train.grad_clip must be positive");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
  policy.validate();
  encoder.validate();
  augment.validate();
  if (augment.out_size != encoder.vision.image_size)
    throw ConfigError("augment output size must equal encoder.vision.image_size");
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", *v);
  return buf;
}

std::string cell(double v) { return cell(std::optional<double>(v)); }

std::optional<double> parse_cell(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("bad numeric cell '" + s + "' in " + path.string(), line);
  }
}

void accumulate(std::optional<double>& sum, const std::optional<double>& mean, std::size_t count) {
  if (!mean || count == 0) return;
  sum = sum.value_or(0.0) + *mean * static_cast<double>(count);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, const std::string& name) {
  return run_dir / "checkpoints" / name;
}

}  // namespace

std::string format_metrics_row(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << cell(r.lr) << ',' << cell(r.total) << ',' << cell(r.i2t) << ',' << cell(r.t2i) << ','
     << cell(r.composite_loss) << ',' << cell(r.plain_loss) << ',' << cell(r.composite_cossim) << ','
     << cell(r.plain_cossim) << ',' << cell(r.probe_acc);
  return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics file: " + path.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << format_metrics_row(r) << '\n';
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines.front() != kMetricsHeader) throw DataError("unexpected metrics header in " + path.string(), 1);
  std::vector<MetricsRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(lines[i]);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!lines[i].empty() && lines[i].back() == ',') cells.emplace_back();
    if (cells.size() != 10) throw DataError("expected 10 columns in " + path.string(), i + 1);
    MetricsRecord r;
    const auto req = [&](std::size_t k) {
      const auto v = parse_cell(cells[k], path, i + 1);
      if (!v) throw DataError("missing required cell in " + path.string(), i + 1);
      return *v;
    };
    r.epoch = static_cast<int>(req(0));
    r.lr = req(1);
    r.total = req(2);
    r.i2t = req(3);
    r.t2i = req(4);
    r.composite_loss = parse_cell(cells[5], path, i + 1);
    r.plain_loss = parse_cell(cells[6], path, i + 1);
    r.composite_cossim = parse_cell(cells[7], path, i + 1);
    r.plain_cossim = parse_cell(cells[8], path, i + 1);
    r.probe_acc = parse_cell(cells[9], path, i + 1);
    out.push_back(r);
  }
  return out;
}

NonFiniteLoss::NonFiniteLoss(std::int64_t step, double value)
    : std::runtime_error("non-finite loss " + std::to_string(value) + " at step " + std::to_string(step)),
      step_(step) {}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_key({seed, static_cast<std::uint64_t>(Stream::kShuffle), static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

TrainResult train(const TrainConfig& config, const ImageDataset& dataset, const Vocabulary& vocab,
                  const TrainOptions& options) {
  config.validate();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  if (dataset.size() < batch) throw ConfigError("dataset is smaller than one batch");
  if (config.encoder.text.vocab_size != vocab.size() || config.encoder.text.eot_id != vocab.end_id())
    throw ConfigError("text encoder vocabulary does not match the tokenizer");

  const std::int64_t steps_per_epoch = static_cast<std::int64_t>(dataset.size() / batch);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  const std::int64_t warmup_steps = steps_per_epoch * config.warmup_epochs;
  const PipelineConfig pipeline = config.pipeline();

  TrainResult result{options.resume_from ? load_checkpoint(*options.resume_from, config.encoder)
                                         : TrainState(DualEncoder(config.encoder, config.seed)),
                     {}};
  TrainState& state = result.state;
  if (options.resume_from) {
    if (state.seed != config.seed) throw ConfigError("resume checkpoint was trained with a different seed");
    if (state.epoch > config.epochs) throw ConfigError("resume checkpoint is past the configured epoch count");
    if (options.run_dir && std::filesystem::exists(*options.run_dir / "metrics.csv")) {
      for (const auto& r : read_metrics_csv(*options.run_dir / "metrics.csv"))
        if (r.epoch <= state.epoch) result.metrics.push_back(r);
    }
  } else {
    state.seed = config.seed;
  }

  AdamW optimizer(config.optimizer);
  optimizer.state() = state.optimizer;

  PartnerMap fixed;
  if (config.policy.mode == CompositionMode::kFixed) fixed = build_fixed_pairing(dataset.size(), config.seed);
  const PartnerMap* pairing = fixed.empty() ? nullptr : &fixed;

  DualEncoder& model = state.model;
  const int last_epoch = options.stop_after_epoch ? std::min(*options.stop_after_epoch, config.epochs) : config.epochs;

  for (int epoch = state.epoch + 1; epoch <= last_epoch; ++epoch) {
    const auto order = epoch_order(dataset.size(), config.seed, epoch);
    MetricsRecord rec;
    rec.epoch = epoch;
    double sum_total = 0.0, sum_i2t = 0.0, sum_t2i = 0.0;
    std::optional<double> sum_comp_loss, sum_plain_loss, sum_comp_cos, sum_plain_cos;

    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      const std::span<const std::size_t> slots(order.data() + static_cast<std::size_t>(s) * batch, batch);
      const BatchPlan plan = plan_batch(static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(s), slots,
                                        config.policy, dataset.size(), config.seed, pairing);
      const Batch b = assemble_batch(plan, dataset, vocab, pipeline, config.policy);

      Tape tape;
      const Var images = tape.constant(to_image_matrix(b.images));
      const Var zi = model.image_embeddings(tape, images);
      const Var zt = model.text_embeddings(tape, to_token_matrix(b.tokens));
      const MatrixD zi_d = tape.value(zi).cast<double>();
      const MatrixD zt_d = tape.value(zt).cast<double>();
      const MatrixD sim = similarity_matrix(zi_d, zt_d);
      const double tau = model.temperature();
      const InfoNceGradient g = info_nce_backward(sim, tau);
      if (!std::isfinite(g.loss.total)) throw NonFiniteLoss(state.global_step, g.loss.total);

      const Matrix d_zi = (g.d_similarity * zt_d).cast<float>();
      const Matrix d_zt = (g.d_similarity.transpose() * zi_d).cast<float>();
      const std::pair<Var, Matrix> seeds[] = {{zi, d_zi}, {zt, d_zt}};
      tape.backward(seeds);
      if (Parameter* lt = model.log_temperature()) lt->grad(0, 0) += g.d_tau * tau;

      const double lr = lr_at(state.global_step + 1, total_steps, warmup_steps, config.base_lr, config.final_lr);
      optimizer.step(model.parameters(), lr);
      model.clamp_temperature();
      model.zero_grad();
      ++state.global_step;

      const GroupedLossReport rep = grouped_metrics(g, sim, b.composed_mask);
      sum_total += rep.total;
      sum_i2t += rep.i2t;
      sum_t2i += rep.t2i;
      accumulate(sum_comp_loss, rep.composite_loss, rep.composite_count);
      accumulate(sum_plain_loss, rep.plain_loss, rep.plain_count);
      accumulate(sum_comp_cos, rep.composite_cossim, rep.composite_count);
      accumulate(sum_plain_cos, rep.plain_cossim, rep.plain_count);
      rec.composite_count += rep.composite_count;
      rec.plain_count += rep.plain_count;
      rec.lr = lr;
    }

    const auto steps = static_cast<double>(steps_per_epoch);
    rec.total = sum_total / steps;
    rec.i2t = sum_i2t / steps;
    rec.t2i = sum_t2i / steps;
    const auto mean = [](const std::optional<double>& sum, std::size_t n) -> std::optional<double> {
      if (!sum || n == 0) return std::nullopt;
      return *sum / static_cast<double>(n);
    };
    rec.composite_loss = mean(sum_comp_loss, rec.composite_count);
    rec.plain_loss = mean(sum_plain_loss, rec.plain_count);
    rec.composite_cossim = mean(sum_comp_cos, rec.composite_count);
    rec.plain_cossim = mean(sum_plain_cos, rec.plain_count);

    state.epoch = epoch;
    state.optimizer = optimizer.state();

    bool improved = false;
    if (options.probe && (config.eval_every_epoch || epoch == config.epochs)) {
      rec.probe_acc = options.probe->evaluate(model, vocab);
      if (!state.best_probe || *rec.probe_acc > *state.best_probe) {
        state.best_probe = rec.probe_acc;
        improved = true;
      }
    }
    result.metrics.push_back(rec);

    if (options.run_dir) {
      write_metrics_csv(*options.run_dir / "metrics.csv", result.metrics);
      const bool cadence = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
      if (cadence || epoch == last_epoch)
        save_checkpoint(state, checkpoint_path(*options.run_dir, "epoch_" + std::to_string(epoch)));
      if (improved && config.select == CheckpointSelect::kBestProbe)
        save_checkpoint(state, checkpoint_path(*options.run_dir, "best"));
    }
    if (options.on_epoch) options.on_epoch(rec);
  }
  state.optimizer = optimizer.state();
  return result;
}

}  // namespace clipc
