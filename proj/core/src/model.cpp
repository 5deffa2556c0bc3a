#include "clipc/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "clipc/error.hpp"
#include "clipc/rng.hpp"

namespace clipc {

namespace {

constexpr Eigen::Index kEvalChunk = 256;

std::size_t block_params(std::size_t w, std::size_t mlp) {
  return 2 * w + (w * 3 * w + 3 * w) + (w * w + w) + 2 * w + (w * mlp * w + mlp * w) + (mlp * w * w + w);
}

}  // namespace

void EncoderConfig::validate() const {
  const auto& v = vision;
  const auto& t = text;
  if (embed_dim < 2) throw ConfigError("encoder.embed_dim must be >= 2");
  if (v.image_size < 1 || v.patch_size < 1 || v.image_size % v.patch_size != 0)
    throw ConfigError("encoder.vision.image_size must be a positive multiple of patch_size");
  if (v.width < 1 || v.depth < 0 || v.heads < 1 || v.width % v.heads != 0 || v.mlp_ratio < 1)
    throw ConfigError("encoder.vision: width must be divisible by heads; depth >= 0; mlp_ratio >= 1");
  if (t.width < 1 || t.depth < 0 || t.heads < 1 || t.width % t.heads != 0 || t.mlp_ratio < 1)
    throw ConfigError("encoder.text: width must be divisible by heads; depth >= 0; mlp_ratio >= 1");
  if (t.context_length < 3) throw ConfigError("encoder.text.context_length must be >= 3");
  if (t.vocab_size < 3 || t.eot_id < 0 || t.eot_id >= t.vocab_size)
    throw ConfigError("encoder.text: vocab_size / eot_id inconsistent");
  const auto& tau = temperature;
  if (!(tau.init > 0.0)) throw ConfigError("encoder.temperature.init must be > 0");
  if (tau.learnable && !(tau.min > 0.0 && tau.min <= tau.init && tau.init <= tau.max))
    throw ConfigError("encoder.temperature: need 0 < min <= init <= max");
}

std::size_t expected_parameter_count(const EncoderConfig& cfg) {
  const auto& v = cfg.vision;
  const auto& t = cfg.text;
  const std::size_t vw = v.width, tw = t.width, d = cfg.embed_dim;
  const std::size_t tokens = static_cast<std::size_t>(v.image_size / v.patch_size) * (v.image_size / v.patch_size) + 1;
  std::size_t n = 0;
  n += 3 * v.patch_size * v.patch_size * vw;                  // patch embedding (no bias)
  n += vw + tokens * vw;                                      // class token + positions
  n += 2 * vw + v.depth * block_params(vw, v.mlp_ratio) + 2 * vw;
  n += vw * d;                                                // g_I
  n += static_cast<std::size_t>(t.vocab_size) * tw + static_cast<std::size_t>(t.context_length) * tw;
  n += t.depth * block_params(tw, t.mlp_ratio) + 2 * tw;
  n += tw * d;                                                // g_T
  if (cfg.temperature.learnable) n += 1;
  return n;
}

Matrix to_image_matrix(std::span<const ImageTensor> images) {
  if (images.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(images.front().data.size());
  Matrix m(static_cast<Eigen::Index>(images.size()), cols);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (static_cast<Eigen::Index>(images[i].data.size()) != cols)
      throw std::invalid_argument("to_image_matrix: images differ in size");
    m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXf>(images[i].data.data(), cols);
  }
  return m;
}

TokenMatrix to_token_matrix(std::span<const TokenSequence> tokens) {
  if (tokens.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(tokens.front().ids.size());
  TokenMatrix m(static_cast<Eigen::Index>(tokens.size()), cols);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (static_cast<Eigen::Index>(tokens[i].ids.size()) != cols)
      throw std::invalid_argument("to_token_matrix: sequences differ in length");
    for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = tokens[i].ids[static_cast<std::size_t>(j)];
  }
  return m;
}

std::size_t DualEncoder::add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool decay) {
  params_.emplace_back(name, rows, cols, decay);
  return params_.size() - 1;
}

DualEncoder::Block DualEncoder::make_block(const std::string& p, int width, int mlp_ratio) {
  const Eigen::Index w = width;
  const Eigen::Index h = static_cast<Eigen::Index>(width) * mlp_ratio;
  Block b{};
  b.ln1_g = add_param(p + ".ln1.gain", 1, w, false);
  b.ln1_b = add_param(p + ".ln1.bias", 1, w, false);
  b.qkv_w = add_param(p + ".attn.qkv.weight", w, 3 * w, true);
  b.qkv_b = add_param(p + ".attn.qkv.bias", 1, 3 * w, true);
  b.proj_w = add_param(p + ".attn.proj.weight", w, w, true);
  b.proj_b = add_param(p + ".attn.proj.bias", 1, w, true);
  b.ln2_g = add_param(p + ".ln2.gain", 1, w, false);
  b.ln2_b = add_param(p + ".ln2.bias", 1, w, false);
  b.fc1_w = add_param(p + ".mlp.fc1.weight", w, h, true);
  b.fc1_b = add_param(p + ".mlp.fc1.bias", 1, h, true);
  b.fc2_w = add_param(p + ".mlp.fc2.weight", h, w, true);
  b.fc2_b = add_param(p + ".mlp.fc2.bias", 1, w, true);
  return b;
}

DualEncoder::DualEncoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& v = config_.vision;
  const auto& t = config_.text;
  const int grid = v.image_size / v.patch_size;

  patch_w_ = add_param("visual.patch_embed.weight", 3L * v.patch_size * v.patch_size, v.width, true);
  cls_ = add_param("visual.class_token", 1, v.width, true);
  vpos_ = add_param("visual.positional", grid * grid + 1, v.width, true);
  ln_pre_g_ = add_param("visual.ln_pre.gain", 1, v.width, false);
  ln_pre_b_ = add_param("visual.ln_pre.bias", 1, v.width, false);
  for (int i = 0; i < v.depth; ++i) vision_blocks_.push_back(make_block("visual.blocks." + std::to_string(i), v.width, v.mlp_ratio));
  ln_post_g_ = add_param("visual.ln_post.gain", 1, v.width, false);
  ln_post_b_ = add_param("visual.ln_post.bias", 1, v.width, false);
  proj_i_ = add_param("visual.projection", v.width, config_.embed_dim, true);

  tok_emb_ = add_param("text.token_embedding", t.vocab_size, t.width, true);
  tpos_ = add_param("text.positional", t.context_length, t.width, true);
  for (int i = 0; i < t.depth; ++i) text_blocks_.push_back(make_block("text.blocks." + std::to_string(i), t.width, t.mlp_ratio));
  ln_final_g_ = add_param("text.ln_final.gain", 1, t.width, false);
  ln_final_b_ = add_param("text.ln_final.bias", 1, t.width, false);
  proj_t_ = add_param("text.projection", t.width, config_.embed_dim, true);

  if (config_.temperature.learnable) {
    log_tau_ = static_cast<std::ptrdiff_t>(add_param("log_temperature", 1, 1, false));
    params_[static_cast<std::size_t>(log_tau_)].value(0, 0) = std::log(config_.temperature.init);
  }

  // Truncated-normal weights, zero biases, unit gains.
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.name == "log_temperature") continue;
    if (p.name.ends_with(".gain")) {
      p.value.setOnes();
      continue;
    }
    if (p.name.ends_with(".bias")) continue;
    double stddev = 0.02;
    if (p.name.ends_with("projection")) stddev = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
    if (p.name.ends_with("positional")) stddev = 0.01;
    Rng rng(derive_key({seed, static_cast<std::uint64_t>(Stream::kInit), i}));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = rng.truncated_normal(stddev);
  }
}

template <typename Self>
Var DualEncoder::block_forward(Self& self, Tape& t, const Block& blk, Var x, int batch, int seq, int heads,
                               std::span<const int> lengths, bool causal) {
  auto P = [&](std::size_t i) { return t.parameter(self.params_[i]); };
  Var h = ops::layer_norm(t, x, P(blk.ln1_g), P(blk.ln1_b));
  h = ops::add_row(t, ops::matmul(t, h, P(blk.qkv_w)), P(blk.qkv_b));
  h = ops::attention(t, h, batch, seq, heads, lengths, causal);
  h = ops::add_row(t, ops::matmul(t, h, P(blk.proj_w)), P(blk.proj_b));
  x = ops::add(t, x, h);
  h = ops::layer_norm(t, x, P(blk.ln2_g), P(blk.ln2_b));
  h = ops::quick_gelu(t, ops::add_row(t, ops::matmul(t, h, P(blk.fc1_w)), P(blk.fc1_b)));
  h = ops::add_row(t, ops::matmul(t, h, P(blk.fc2_w)), P(blk.fc2_b));
  return ops::add(t, x, h);
}

template <typename Self>
Var DualEncoder::image_tower(Self& self, Tape& t, Var images, bool project) {
  const auto& v = self.config_.vision;
  const auto batch = static_cast<int>(t.value(images).rows());
  if (t.value(images).cols() != 3L * v.image_size * v.image_size)
    throw std::invalid_argument("encode_images: expected " + std::to_string(v.image_size) + "x" +
                                std::to_string(v.image_size) + " images");
  auto P = [&](std::size_t i) { return t.parameter(self.params_[i]); };
  const int grid = v.image_size / v.patch_size;
  const int seq = grid * grid + 1;

  Var x = ops::matmul(t, ops::patchify(t, images, v.image_size, v.patch_size), P(self.patch_w_));
  x = ops::prepend_token(t, x, P(self.cls_), batch, seq - 1);
  x = ops::add_positional(t, x, P(self.vpos_), seq);
  x = ops::layer_norm(t, x, P(self.ln_pre_g_), P(self.ln_pre_b_));
  const std::vector<int> lengths(static_cast<std::size_t>(batch), seq);
  for (const auto& blk : self.vision_blocks_) x = block_forward(self, t, blk, x, batch, seq, v.heads, lengths, false);
  std::vector<int> cls_rows(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) cls_rows[static_cast<std::size_t>(b)] = b * seq;
  x = ops::gather_rows(t, x, std::move(cls_rows));
  x = ops::layer_norm(t, x, P(self.ln_post_g_), P(self.ln_post_b_));
  if (!project) return x;
  return ops::l2_normalize_rows(t, ops::matmul(t, x, P(self.proj_i_)));
}

std::vector<int> DualEncoder::eot_positions(const TokenMatrix& tokens) const {
  std::vector<int> pos(static_cast<std::size_t>(tokens.rows()), -1);
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    for (Eigen::Index c = 0; c < tokens.cols(); ++c) {
      if (tokens(r, c) == config_.text.eot_id) {
        pos[static_cast<std::size_t>(r)] = static_cast<int>(c);
        break;
      }
    }
    if (pos[static_cast<std::size_t>(r)] < 0)
      throw std::invalid_argument("encode_texts: row " + std::to_string(r) + " has no end-of-text token");
  }
  return pos;
}

template <typename Self>
Var DualEncoder::text_tower(Self& self, Tape& t, const TokenMatrix& tokens, bool project) {
  const auto& tc = self.config_.text;
  if (tokens.cols() != tc.context_length)
    throw std::invalid_argument("encode_texts: expected context length " + std::to_string(tc.context_length));
  const auto batch = static_cast<int>(tokens.rows());
  const int seq = tc.context_length;
  auto P = [&](std::size_t i) { return t.parameter(self.params_[i]); };
  const auto eot = self.eot_positions(tokens);

  std::vector<int> ids(static_cast<std::size_t>(tokens.size()));
  std::vector<int> lengths(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    lengths[static_cast<std::size_t>(b)] = eot[static_cast<std::size_t>(b)] + 1;
    for (int s = 0; s < seq; ++s) {
      // Ids beyond the end token are masked out of attention and never read.
      const int id = s <= eot[static_cast<std::size_t>(b)] ? tokens(b, s) : tc.eot_id;
      ids[static_cast<std::size_t>(b) * seq + s] = id;
    }
  }
  Var x = ops::embedding(t, P(self.tok_emb_), std::move(ids));
  x = ops::add_positional(t, x, P(self.tpos_), seq);
  for (const auto& blk : self.text_blocks_) x = block_forward(self, t, blk, x, batch, seq, tc.heads, lengths, tc.causal);
  std::vector<int> rows(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) rows[static_cast<std::size_t>(b)] = b * seq + eot[static_cast<std::size_t>(b)];
  x = ops::gather_rows(t, x, std::move(rows));
  x = ops::layer_norm(t, x, P(self.ln_final_g_), P(self.ln_final_b_));
  if (!project) return x;
  return ops::l2_normalize_rows(t, ops::matmul(t, x, P(self.proj_t_)));
}

Var DualEncoder::image_features(Tape& t, Var images) { return image_tower(*this, t, images, false); }
Var DualEncoder::image_embeddings(Tape& t, Var images) { return image_tower(*this, t, images, true); }
Var DualEncoder::text_features(Tape& t, const TokenMatrix& tokens) { return text_tower(*this, t, tokens, false); }
Var DualEncoder::text_embeddings(Tape& t, const TokenMatrix& tokens) { return text_tower(*this, t, tokens, true); }

Matrix DualEncoder::encode_images(const Matrix& images) const {
  Matrix out(images.rows(), config_.embed_dim);
  for (Eigen::Index r = 0; r < images.rows(); r += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, images.rows() - r);
    Tape t;
    out.middleRows(r, n) = t.value(image_tower(*this, t, t.constant(images.middleRows(r, n)), true));
  }
  return out;
}

Matrix DualEncoder::extract_image_features(const Matrix& images) const {
  Matrix out(images.rows(), config_.vision.width);
  for (Eigen::Index r = 0; r < images.rows(); r += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, images.rows() - r);
    Tape t;
    out.middleRows(r, n) = t.value(image_tower(*this, t, t.constant(images.middleRows(r, n)), false));
  }
  return out;
}

Matrix DualEncoder::encode_texts(const TokenMatrix& tokens) const {
  Matrix out(tokens.rows(), config_.embed_dim);
  for (Eigen::Index r = 0; r < tokens.rows(); r += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, tokens.rows() - r);
    Tape t;
    out.middleRows(r, n) = t.value(text_tower(*this, t, TokenMatrix(tokens.middleRows(r, n)), true));
  }
  return out;
}

double DualEncoder::temperature() const {
  if (log_tau_ < 0) return config_.temperature.init;
  const auto& tau = config_.temperature;
  return std::clamp(std::exp(params_[static_cast<std::size_t>(log_tau_)].value(0, 0)), tau.min, tau.max);
}

Parameter* DualEncoder::log_temperature() {
  return log_tau_ < 0 ? nullptr : &params_[static_cast<std::size_t>(log_tau_)];
}

void DualEncoder::clamp_temperature() {
  if (log_tau_ < 0) return;
  auto& v = params_[static_cast<std::size_t>(log_tau_)].value(0, 0);
  v = std::clamp(v, std::log(config_.temperature.min), std::log(config_.temperature.max));
}

std::size_t DualEncoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void DualEncoder::zero_grad() {
  for (auto& p : params_) p.grad = MatrixD::Zero(p.value.rows(), p.value.cols());
}

}  // namespace clipc
