#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clipc/autograd.hpp"
#include "clipc/image.hpp"
#include "clipc/tensor.hpp"
#include "clipc/textproc.hpp"

namespace clipc {

struct VisionConfig {
  int image_size = 64;
  int patch_size = 8;
  int width = 128;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;

  bool operator==(const VisionConfig&) const = default;
};

struct TextConfig {
  int context_length = kDefaultContextLength;
  int vocab_size = 4099;
  int width = 128;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
  bool causal = true;
  TokenId eot_id = 2;

  bool operator==(const TextConfig&) const = default;
};

struct TemperatureConfig {
  bool learnable = false;
  double init = 0.01;
  double min = 0.01;
  double max = 1.0;

  bool operator==(const TemperatureConfig&) const = default;
};

struct EncoderConfig {
  VisionConfig vision;
  TextConfig text;
  int embed_dim = 128;
  TemperatureConfig temperature;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Number of scalar parameters implied by `cfg`.
std::size_t expected_parameter_count(const EncoderConfig& cfg);

/// Pack normalized images (each S x S) into a B x 3*S*S matrix.
Matrix to_image_matrix(std::span<const ImageTensor> images);
TokenMatrix to_token_matrix(std::span<const TokenSequence> tokens);

/// Image and text transformers with linear projections into a shared
/// embedding space. Pre-norm blocks; the image feature is the class token,
/// the text feature is the end-of-text position.
class DualEncoder {
 public:
  DualEncoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// f_I: B x vision.width features before projection.
  Var image_features(Tape& t, Var images);
  Var image_embeddings(Tape& t, Var images);
  /// f_T: B x text.width features at the end-of-text position.
  Var text_features(Tape& t, const TokenMatrix& tokens);
  Var text_embeddings(Tape& t, const TokenMatrix& tokens);

  /// Evaluation-mode forward passes; no gradient graph is kept.
  Matrix encode_images(const Matrix& images) const;
  Matrix encode_texts(const TokenMatrix& tokens) const;
  Matrix extract_image_features(const Matrix& images) const;

  double temperature() const;
  /// Learnable temperature parameter, or nullptr when fixed.
  Parameter* log_temperature();
  /// Clamp learnable log-temperature into [log min, log max].
  void clamp_temperature();

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  struct Block {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  template <typename Self>
  static Var image_tower(Self& self, Tape& t, Var images, bool project);
  template <typename Self>
  static Var text_tower(Self& self, Tape& t, const TokenMatrix& tokens, bool project);
  template <typename Self>
  static Var block_forward(Self& self, Tape& t, const Block& blk, Var x, int batch, int seq, int heads,
                           std::span<const int> lengths, bool causal);

  std::size_t add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay);
  Block make_block(const std::string& prefix, int width, int mlp_ratio);
  std::vector<int> eot_positions(const TokenMatrix& tokens) const;

  EncoderConfig config_;
  std::vector<Parameter> params_;
  std::vector<Block> vision_blocks_, text_blocks_;
  std::size_t patch_w_ = 0, cls_ = 0, vpos_ = 0, ln_pre_g_ = 0, ln_pre_b_ = 0, ln_post_g_ = 0, ln_post_b_ = 0,
              proj_i_ = 0;
  std::size_t tok_emb_ = 0, tpos_ = 0, ln_final_g_ = 0, ln_final_b_ = 0, proj_t_ = 0;
  std::ptrdiff_t log_tau_ = -1;
};

}  // namespace clipc
