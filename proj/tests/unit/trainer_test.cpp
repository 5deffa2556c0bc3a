#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "clipc/checkpoint.hpp"
#include "clipc/error.hpp"
#include "clipc/trainer.hpp"
#include "test_support.hpp"

namespace clipc {
namespace {

using testing::read_file;
using testing::TempDir;

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("trainer");
    SyntheticConfig c;
    c.num_samples = 72;
    c.resolution = 16;
    c.seed = 3;
    generate_synthetic(c, dir_->path());
    data_ = new ImageDataset(load_manifest(*dir_ / "manifest.tsv"));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete dir_;
  }

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 16;
    c.warmup_epochs = 1;
    c.seed = 21;
    c.encoder = testing::tiny_encoder(vocab_.size(), vocab_.end_id());
    c.augment.out_size = 16;
    return c;
  }

  static inline TempDir* dir_ = nullptr;
  static inline ImageDataset* data_ = nullptr;
  HashedWordVocabulary vocab_{47};
};

TEST_F(TrainerTest, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(50, 1, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expected(50);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  EXPECT_EQ(sorted, expected);
  EXPECT_EQ(a, epoch_order(50, 1, 1));
  EXPECT_NE(a, epoch_order(50, 1, 2));
  EXPECT_NE(a, epoch_order(50, 2, 1));
}

TEST_F(TrainerTest, RunsAndWritesLayout) {
  TempDir run("run");
  TrainOptions opts;
  opts.run_dir = run.path();
  const auto result = train(config(), *data_, vocab_, opts);
  ASSERT_EQ(result.metrics.size(), 4u);
  EXPECT_EQ(result.state.epoch, 4);
  EXPECT_EQ(result.state.global_step, 4 * (72 / 16));
  EXPECT_TRUE(std::filesystem::exists(run / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(run.path() / "checkpoints" / "epoch_4"));
  for (const auto& r : result.metrics) {
    EXPECT_TRUE(std::isfinite(r.total));
    EXPECT_EQ(r.composite_count + r.plain_count, 64u);
    EXPECT_FALSE(r.probe_acc);
    const double weighted = (r.composite_loss.value_or(0) * r.composite_count + r.plain_loss.value_or(0) * r.plain_count) /
                            static_cast<double>(r.composite_count + r.plain_count);
    EXPECT_NEAR(weighted, r.total, 1e-6);
  }
  EXPECT_NEAR(result.metrics.back().lr, 1e-5, 1e-12);
  EXPECT_EQ(read_metrics_csv(run / "metrics.csv").size(), 4u);
}

TEST_F(TrainerTest, IdenticalRunsWriteIdenticalMetrics) {
  TempDir a("run"), b("run");
  TrainOptions oa, ob;
  oa.run_dir = a.path();
  ob.run_dir = b.path();
  train(config(), *data_, vocab_, oa);
  train(config(), *data_, vocab_, ob);
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a.path() / "checkpoints" / "epoch_4"), read_file(b.path() / "checkpoints" / "epoch_4"));
}

TEST_F(TrainerTest, ResumeReproducesRemainingEpochs) {
  TempDir full("run"), part("run");
  TrainOptions of;
  of.run_dir = full.path();
  const auto reference = train(config(), *data_, vocab_, of);

  TrainOptions op;
  op.run_dir = part.path();
  op.stop_after_epoch = 2;
  const auto first = train(config(), *data_, vocab_, op);
  EXPECT_EQ(first.state.epoch, 2);
  TrainOptions resume;
  resume.run_dir = part.path();
  resume.resume_from = part.path() / "checkpoints" / "epoch_2";
  const auto rest = train(config(), *data_, vocab_, resume);
  ASSERT_EQ(rest.metrics.size(), 4u);
  EXPECT_EQ(read_file(full / "metrics.csv"), read_file(part / "metrics.csv"));
  for (std::size_t i = 0; i < reference.state.model.parameters().size(); ++i)
    EXPECT_EQ(reference.state.model.parameters()[i].value, rest.state.model.parameters()[i].value);
}

TEST_F(TrainerTest, RhoZeroEqualsNoneMode) {
  auto a = config(), b = config();
  a.policy.rho = 0.0;
  b.policy.mode = CompositionMode::kNone;
  const auto ra = train(a, *data_, vocab_);
  const auto rb = train(b, *data_, vocab_);
  ASSERT_EQ(ra.metrics.size(), rb.metrics.size());
  for (std::size_t i = 0; i < ra.metrics.size(); ++i)
    EXPECT_EQ(format_metrics_row(ra.metrics[i]), format_metrics_row(rb.metrics[i]));
  EXPECT_FALSE(ra.metrics[0].composite_loss);
}

TEST_F(TrainerTest, AllCompositionModesTrain) {
  for (auto mode : {CompositionMode::kFixed, CompositionMode::kStylistic}) {
    for (auto fn : {ImageFn::kCenterHalf, ImageFn::kMixUp, ImageFn::kCutMix}) {
      auto c = config();
      c.epochs = 2;
      c.policy.mode = mode;
      c.policy.image_fn = fn;
      c.policy.rho = 0.5;
      const auto r = train(c, *data_, vocab_);
      EXPECT_TRUE(std::isfinite(r.metrics.back().total));
      EXPECT_GT(r.metrics.back().composite_count, 0u);
    }
  }
}

TEST_F(TrainerTest, LearnableTemperatureStaysClamped) {
  auto c = config();
  c.encoder.temperature = {true, 0.07, 0.05, 0.2};
  c.base_lr = 0.05;
  const auto r = train(c, *data_, vocab_);
  const double tau = r.state.model.temperature();
  EXPECT_GE(tau, 0.05);
  EXPECT_LE(tau, 0.2);
  EXPECT_NE(tau, 0.07);
}

TEST_F(TrainerTest, ProbeSelectsBestCheckpoint) {
  auto c = config();
  c.epochs = 3;
  const auto labels = load_labels(*dir_ / "labels.tsv");
  const auto classes = read_lines(*dir_ / "classes.txt");
  const ZeroShotProbe probe = make_zero_shot_probe(*data_, labels, classes, default_prompt_templates(), c.augment, 16);
  TempDir run("run");
  TrainOptions opts;
  opts.run_dir = run.path();
  opts.probe = &probe;
  const auto r = train(c, *data_, vocab_, opts);
  double best = -1;
  for (const auto& m : r.metrics) {
    ASSERT_TRUE(m.probe_acc);
    best = std::max(best, *m.probe_acc);
  }
  EXPECT_EQ(*r.state.best_probe, best);
  const auto saved = load_checkpoint(run.path() / "checkpoints" / "best");
  EXPECT_EQ(saved.best_probe, best);
  EXPECT_DOUBLE_EQ(probe.evaluate(saved.model, vocab_), best);
}

TEST_F(TrainerTest, NonFiniteLossReportsStep) {
  TempDir run("run");
  TrainOptions opts;
  opts.run_dir = run.path();
  opts.stop_after_epoch = 1;
  train(config(), *data_, vocab_, opts);
  auto state = load_checkpoint(run.path() / "checkpoints" / "epoch_1");
  state.model.parameters()[0].value(0, 0) = std::nan("");
  save_checkpoint(state, run / "poisoned");
  TrainOptions resume;
  resume.resume_from = run / "poisoned";
  try {
    train(config(), *data_, vocab_, resume);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.step(), state.global_step);
  }
}

TEST_F(TrainerTest, ConfigValidation) {
  auto c = config();
  c.warmup_epochs = c.epochs;
  EXPECT_THROW(train(c, *data_, vocab_), ConfigError);
  c = config();
  c.batch_size = 1;
  EXPECT_THROW(train(c, *data_, vocab_), ConfigError);
  c = config();
  c.batch_size = 100;
  EXPECT_THROW(train(c, *data_, vocab_), ConfigError);
  c = config();
  c.encoder.text.vocab_size = 60;
  EXPECT_THROW(train(c, *data_, vocab_), ConfigError);
}

TEST_F(TrainerTest, CheckpointRoundTrip) {
  TempDir run("run");
  TrainOptions opts;
  opts.run_dir = run.path();
  auto c = config();
  c.epochs = 2;
  const auto r = train(c, *data_, vocab_, opts);
  const auto path = run.path() / "checkpoints" / "epoch_2";
  const auto loaded = load_checkpoint(path, c.encoder);
  save_checkpoint(loaded, run / "again");
  EXPECT_EQ(read_file(path), read_file(run / "again"));
  EXPECT_EQ(loaded.global_step, r.state.global_step);
  EXPECT_EQ(loaded.optimizer.step, r.state.optimizer.step);
  for (std::size_t i = 0; i < loaded.optimizer.m.size(); ++i) {
    EXPECT_EQ(loaded.optimizer.m[i], r.state.optimizer.m[i]);
    EXPECT_EQ(loaded.optimizer.v[i], r.state.optimizer.v[i]);
  }
  Matrix imgs = Matrix::Ones(2, 3 * 16 * 16);
  EXPECT_EQ(loaded.model.encode_images(imgs), r.state.model.encode_images(imgs));

  auto other = c.encoder;
  other.embed_dim = 16;
  EXPECT_THROW(load_checkpoint(path, other), ConfigError);
}

TEST_F(TrainerTest, CorruptCheckpointsRejected) {
  TempDir run("run");
  testing::write_file(run / "junk", "not a checkpoint");
  EXPECT_THROW(load_checkpoint(run / "junk"), DataError);
  TrainState s(DualEncoder(config().encoder, 1));
  save_checkpoint(s, run / "ok");
  auto bytes = read_file(run / "ok");
  bytes[8] = 9;  // version field
  testing::write_file(run / "badver", bytes);
  EXPECT_THROW(load_checkpoint(run / "badver"), DataError);
  testing::write_file(run / "short", read_file(run / "ok").substr(0, 200));
  EXPECT_THROW(load_checkpoint(run / "short"), DataError);
}

TEST(MetricsCsv, RoundTripWithEmptyCells) {
  TempDir dir("csv");
  MetricsRecord a;
  a.epoch = 1;
  a.lr = 0.0015;
  a.total = 5.5;
  a.i2t = 5.25;
  a.t2i = 5.75;
  a.plain_loss = 5.5;
  a.plain_cossim = 0.125;
  MetricsRecord b = a;
  b.epoch = 2;
  b.composite_loss = 4.0;
  b.composite_cossim = 0.5;
  b.probe_acc = 12.5;
  write_metrics_csv(dir / "m.csv", {a, b});
  const auto text = read_file(dir / "m.csv");
  EXPECT_EQ(text, std::string(kMetricsHeader) + "\n1,0.0015,5.5,5.25,5.75,,5.5,,0.125,\n2,0.0015,5.5,5.25,5.75,4,5.5,0.5,0.125,12.5\n");
  const auto back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_FALSE(back[0].composite_loss);
  EXPECT_FALSE(back[0].probe_acc);
  EXPECT_EQ(*back[1].probe_acc, 12.5);
  testing::write_file(dir / "bad.csv", "epoch,lr\n1,2\n");
  EXPECT_THROW(read_metrics_csv(dir / "bad.csv"), DataError);
}

}  // namespace
}  // namespace clipc
