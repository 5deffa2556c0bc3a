#include <gtest/gtest.h>

#include "clipc/config.hpp"
#include "clipc/error.hpp"
#include "test_support.hpp"

namespace clipc {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyObjectGivesDefaults) {
  const RunConfig rc = parse_run_config("{}", "/base");
  EXPECT_FALSE(rc.seed);
  EXPECT_FALSE(rc.manifest);
  EXPECT_EQ(rc.train.epochs, 40);
  EXPECT_EQ(rc.train.batch_size, 256);
  EXPECT_EQ(rc.train.base_lr, 0.003);
  EXPECT_EQ(rc.train.warmup_epochs, 5);
  EXPECT_EQ(rc.train.policy.mode, CompositionMode::kDynamic);
  EXPECT_EQ(rc.train.policy.rho, 0.3);
  EXPECT_EQ(rc.train.encoder.temperature.init, 0.01);
  EXPECT_FALSE(rc.train.encoder.temperature.learnable);
  EXPECT_EQ(rc.tokenizer.kind, "hashed");
  EXPECT_FALSE(rc.probe.enabled());
  EXPECT_EQ(rc.train.augment.out_size, rc.train.encoder.vision.image_size);
}

TEST(Config, ReadsSectionsAndResolvesPaths) {
  const RunConfig rc = parse_run_config(R"({
    // comments are allowed
    "seed": 7,
    "dataset": {"manifest": "data/m.tsv"},
    "train": {"epochs": 3, "batch_size": 8, "warmup_epochs": 1, "select": "last", "grad_clip": 1.5},
    "policy": {"mode": "stylistic", "rho": 0.5, "modality": "text", "image_fn": "mixup"},
    "encoder": {"vision": {"image_size": 32}, "temperature": {"learnable": true, "init": 0.07}},
    "augment": {"scale": [0.5, 0.9]},
    "probe": {"manifest": "/abs/probe.tsv"},
    "synthetic": {"num_samples": 10, "shapes": ["ring"]}
  })",
                                        "/base");
  EXPECT_EQ(*rc.seed, 7u);
  EXPECT_EQ(rc.train.seed, 7u);
  EXPECT_EQ(*rc.manifest, std::filesystem::path("/base/data/m.tsv"));
  EXPECT_EQ(rc.probe.manifest, std::filesystem::path("/abs/probe.tsv"));
  EXPECT_EQ(rc.output_dir, std::filesystem::path("/base/runs"));
  EXPECT_EQ(parse_run_config(R"({"output_dir": "../out"})", "cfg").output_dir, std::filesystem::path("cfg/../out"));
  EXPECT_EQ(rc.train.epochs, 3);
  EXPECT_EQ(rc.train.select, CheckpointSelect::kLast);
  EXPECT_EQ(*rc.train.optimizer.grad_clip, 1.5);
  EXPECT_EQ(rc.train.policy.mode, CompositionMode::kStylistic);
  EXPECT_EQ(rc.train.policy.modality, Modality::kTextOnly);
  EXPECT_EQ(rc.train.policy.image_fn, ImageFn::kMixUp);
  EXPECT_EQ(rc.train.encoder.vision.image_size, 32);
  EXPECT_EQ(rc.train.augment.out_size, 32);
  EXPECT_TRUE(rc.train.encoder.temperature.learnable);
  EXPECT_EQ(rc.train.augment.scale_low, 0.5);
  EXPECT_EQ(rc.train.augment.scale_high, 0.9);
  EXPECT_EQ(rc.synthetic.num_samples, 10u);
  EXPECT_EQ(rc.synthetic.seed, 7u);
  EXPECT_EQ(rc.synthetic.shape_set, std::vector<std::string>{"ring"});
}

TEST(Config, UnknownKeysNameTheDottedPath) {
  EXPECT_EQ(error_of(R"({"policy": {"rho_": 0.3}})"), "unknown config key: policy.rho_");
  EXPECT_EQ(error_of(R"({"encoder": {"vision": {"widht": 3}}})"), "unknown config key: encoder.vision.widht");
  EXPECT_EQ(error_of(R"({"sede": 1})"), "unknown config key: sede");
  EXPECT_EQ(error_of(R"({"encoder": {"text": {"vocab_size": 10}}})"), "unknown config key: encoder.text.vocab_size");
}

TEST(Config, TypeAndValueErrors) {
  EXPECT_NE(error_of(R"({"train": {"epochs": "many"}})").find("train.epochs"), std::string::npos);
  EXPECT_NE(error_of(R"({"policy": {"mode": "sometimes"}})").find("policy.mode"), std::string::npos);
  EXPECT_NE(error_of(R"({"train": {"select": "first"}})").find("train.select"), std::string::npos);
  EXPECT_NE(error_of(R"({"augment": {"scale": [0.5]}})").find("augment.scale"), std::string::npos);
  EXPECT_NE(error_of(R"({"policy": 3})").find("policy"), std::string::npos);
  EXPECT_NE(error_of(R"({"tokenizer": {"kind": "sentencepiece"}})"), "");
  EXPECT_NE(error_of("{not json"), "");
}

TEST(Config, ResolvedConfigRoundTrips) {
  const RunConfig rc = parse_run_config(R"({"seed": 3, "train": {"epochs": 9}, "policy": {"rho": 0.25},
                                            "dataset": {"manifest": "/d/m.tsv"}})",
                                        "/base");
  const std::string text = resolved_config_json(rc);
  const RunConfig back = parse_run_config(text, "/elsewhere");
  EXPECT_EQ(resolved_config_json(back), text);
  EXPECT_EQ(back.train.epochs, 9);
  EXPECT_EQ(back.train.policy.rho, 0.25);
}

TEST(Config, EncoderJsonRoundTripsWithVocabulary) {
  EncoderConfig e = testing::tiny_encoder(77, 5);
  e.temperature = {true, 0.05, 0.02, 0.5};
  EXPECT_EQ(encoder_config_from_json(encoder_config_json(e)), e);
}

TEST(Config, VocabularyBinding) {
  TokenizerConfig t;
  t.buckets = 100;
  const auto vocab = make_vocabulary(t);
  EncoderConfig e;
  bind_vocabulary(*vocab, e);
  EXPECT_EQ(e.text.vocab_size, 103);
  EXPECT_EQ(e.text.eot_id, 2);
  t.kind = "bpe";
  t.vocab = "/nonexistent/vocab.txt";
  t.merges = "/nonexistent/merges.txt";
  EXPECT_ANY_THROW(make_vocabulary(t));
}

TEST(Config, MissingFile) { EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError); }

}  // namespace
}  // namespace clipc
