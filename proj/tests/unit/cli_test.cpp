#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "clipc/trainer.hpp"
#include "commands.hpp"
#include "test_support.hpp"

namespace clipc {
namespace {

using testing::read_file;
using testing::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "clipc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = invoke({"synth-gen", "--out", (*dir_ / "data").string(), "--num-samples", "48", "--resolution", "16",
                           "--seed", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    testing::write_file(*dir_ / "tiny.json", R"({
      // tiny model for command tests
      "output_dir": "runs",
      "dataset": {"manifest": "data/manifest.tsv"},
      "train": {"epochs": 2, "batch_size": 16, "warmup_epochs": 1, "checkpoint_every": 1},
      "encoder": {
        "embed_dim": 8,
        "vision": {"image_size": 16, "patch_size": 8, "width": 16, "depth": 1, "heads": 2, "mlp_ratio": 2},
        "text": {"context_length": 12, "width": 16, "depth": 1, "heads": 2, "mlp_ratio": 2}
      },
      "tokenizer": {"buckets": 47},
      "probe": {"manifest": "data/manifest.tsv"},
      "linear_probe": {"epochs": 3, "batch_size": 16}
    })");
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string config() { return (*dir_ / "tiny.json").string(); }

  static inline TempDir* dir_ = nullptr;
};

TEST_F(CliTest, SynthGenIsReproducible) {
  TempDir other("cli");
  const auto r = invoke({"synth-gen", "--out", (other / "data").string(), "--num-samples", "48", "--resolution", "16",
                         "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("samples: 48"), std::string::npos);
  for (const char* f : {"manifest.tsv", "labels.tsv", "classes.txt", "images/000000.ppm", "images/000047.ppm"})
    EXPECT_EQ(read_file(other / "data" / f), read_file(*dir_ / "data" / f)) << f;
}

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"train", "--help"}).code, 0);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"frobnicate"}).code, 1);
  EXPECT_EQ(invoke({"train"}).code, 1);
  const auto bad_rho = invoke({"train", "--config", config(), "--seed", "1", "--rho", "1.5"});
  EXPECT_EQ(bad_rho.code, 1);
  EXPECT_NE(bad_rho.err.find("rho"), std::string::npos);
  EXPECT_EQ(invoke({"train", "--config", config(), "--seed", "1", "--mode", "often"}).code, 1);
  const auto no_seed = invoke({"train", "--config", config()});
  EXPECT_EQ(no_seed.code, 1);
  EXPECT_NE(no_seed.err.find("seed"), std::string::npos);
  EXPECT_EQ(invoke({"synth-gen", "--out", (*dir_ / "x").string(), "--resolution", "2"}).code, 1);
}

TEST_F(CliTest, RunNaming) {
  EXPECT_EQ(cli::run_name("dynamic", 0.3, "center_half", "both", 0), "dynamic_rho0.3_center_half_both_seed0");
  EXPECT_EQ(cli::run_name("none", 0, "cutmix", "text", 12), "none_rho0_cutmix_text_seed12");
}

TEST_F(CliTest, TrainEvalAndExport) {
  const auto t = invoke({"train", "--config", config(), "--seed", "5"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto run = *dir_ / "runs" / "dynamic_rho0.3_center_half_both_seed5";
  EXPECT_NE(t.out.find("run: " + run.string()), std::string::npos);
  for (const char* f : {"config.resolved", "metrics.csv", "checkpoints/epoch_2", "checkpoints/best"})
    EXPECT_TRUE(std::filesystem::exists(run / f)) << f;
  const auto metrics = read_metrics_csv(run / "metrics.csv");
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_TRUE(metrics[1].probe_acc);

  const auto ckpt = (run / "checkpoints" / "epoch_2").string();
  const auto zs = invoke({"eval", "--checkpoint", ckpt, "--config", config(), "--task", "zeroshot"});
  ASSERT_EQ(zs.code, 0) << zs.err;
  EXPECT_EQ(zs.out.rfind("metric,value\ntop1,", 0), 0u);
  EXPECT_EQ(read_file(run / "reports" / "zeroshot.csv"), zs.out);

  const auto rt = invoke({"eval", "--checkpoint", ckpt, "--config", config(), "--task", "retrieval"});
  ASSERT_EQ(rt.code, 0) << rt.err;
  EXPECT_EQ(count_lines(rt.out), 5u);
  for (const char* k : {"i2t_r1,", "i2t_r5,", "t2i_r1,", "t2i_r5,"}) EXPECT_NE(rt.out.find(k), std::string::npos);

  const auto pr = invoke({"eval", "--checkpoint", ckpt, "--config", config(), "--task", "probe", "--out",
                          (*dir_ / "probe.csv").string()});
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_EQ(read_file(*dir_ / "probe.csv").rfind("metric,value\nprobe_top1,", 0), 0u);

  EXPECT_EQ(invoke({"eval", "--checkpoint", ckpt, "--config", config(), "--task", "captioning"}).code, 1);

  // A config describing a different architecture must be rejected.
  auto other = read_file(*dir_ / "tiny.json");
  other.replace(other.find("\"embed_dim\": 8"), 14, "\"embed_dim\": 4");
  testing::write_file(*dir_ / "other.json", other);
  const auto mismatch = invoke({"eval", "--checkpoint", ckpt, "--config", (*dir_ / "other.json").string()});
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.err.find("error:"), std::string::npos);

  const auto csv = *dir_ / "curves.csv";
  const auto ex = invoke({"export-curves", (run / "metrics.csv").string(), "--out", csv.string()});
  ASSERT_EQ(ex.code, 0) << ex.err;
  // Every metric is present: 9 rows per epoch.
  EXPECT_EQ(count_lines(read_file(csv)), 1u + 2u * 9u);
  EXPECT_EQ(read_file(csv).rfind("run,epoch,metric,value\ndynamic_rho0.3_center_half_both_seed5,1,lr,", 0), 0u);

  const auto dup = invoke({"export-curves", (run / "metrics.csv").string(), (run / "metrics.csv").string(), "--out",
                           csv.string()});
  EXPECT_EQ(dup.code, 1);
  EXPECT_NE(dup.err.find("duplicate"), std::string::npos);
  EXPECT_EQ(invoke({"export-curves", (run / "metrics.csv").string(), (run / "metrics.csv").string(), "--name", "a",
                    "--name", "b", "--out", csv.string()})
                .code,
            0);
  EXPECT_EQ(count_lines(read_file(csv)), 1u + 2u * 2u * 9u);
}

TEST_F(CliTest, RhoZeroMatchesNoneAndOmitsEmptyCells) {
  const auto a = invoke({"train", "--config", config(), "--seed", "6", "--rho", "0", "--run-dir", (*dir_ / "r0").string()});
  const auto b = invoke({"train", "--config", config(), "--seed", "6", "--mode", "none", "--run-dir",
                         (*dir_ / "none").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read_file(*dir_ / "r0" / "metrics.csv"), read_file(*dir_ / "none" / "metrics.csv"));

  const auto csv = *dir_ / "none.csv";
  ASSERT_EQ(invoke({"export-curves", (*dir_ / "none" / "metrics.csv").string(), "--out", csv.string()}).code, 0);
  const auto text = read_file(csv);
  EXPECT_EQ(text.find("composite"), std::string::npos);
  EXPECT_EQ(count_lines(text), 1u + 2u * 7u);
}

TEST_F(CliTest, ResumeContinuesRun) {
  const auto full = invoke({"train", "--config", config(), "--seed", "8", "--run-dir", (*dir_ / "full").string()});
  ASSERT_EQ(full.code, 0) << full.err;
  const auto part = *dir_ / "part";
  std::filesystem::create_directories(part / "checkpoints");
  std::filesystem::copy_file(*dir_ / "full" / "checkpoints" / "epoch_1", part / "checkpoints" / "epoch_1");
  const auto text = read_file(*dir_ / "full" / "metrics.csv");
  std::size_t cut = text.find('\n', text.find('\n') + 1) + 1;
  testing::write_file(part / "metrics.csv", text.substr(0, cut));

  const auto resumed = invoke({"train", "--config", config(), "--seed", "8", "--run-dir", part.string(), "--resume",
                               (part / "checkpoints" / "epoch_1").string()});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(read_file(part / "metrics.csv"), text);
  EXPECT_EQ(read_file(part / "checkpoints" / "epoch_2"), read_file(*dir_ / "full" / "checkpoints" / "epoch_2"));

  const auto other_seed = invoke({"train", "--config", config(), "--seed", "9", "--run-dir", part.string(), "--resume",
                                  (part / "checkpoints" / "epoch_1").string()});
  EXPECT_EQ(other_seed.code, 1);
  EXPECT_EQ(invoke({"train", "--config", config(), "--seed", "8", "--resume", (*dir_ / "nope").string()}).code, 1);
}

}  // namespace
}  // namespace clipc
