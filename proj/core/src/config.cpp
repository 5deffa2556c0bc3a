#include "clipc/config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "clipc/error.hpp"
#include "json.hpp"

namespace clipc {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return false;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
    return true;
  }

  template <typename T>
  bool get(const char* key, std::optional<T>& out) {
    T v{};
    if (!get(key, v)) return false;
    out = v;
    return true;
  }

  bool get_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    if (!get(key, s) || s.empty()) return false;
    out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
    return true;
  }

  template <typename T>
  bool get_range(const char* key, T& lo, T& hi) {
    std::vector<T> v;
    if (!get(key, v)) return false;
    if (v.size() != 2) throw ConfigError(field(key) + ": expected two values");
    lo = v[0];
    hi = v[1];
    return true;
  }

  /// Sub-object reader, or nullopt when absent.
  std::optional<ObjectReader> child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    return ObjectReader(*it, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown config key: " + field(k));
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config root" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Parse, typename T>
void parse_enum(ObjectReader& r, const char* key, Parse parse, T& out) {
  std::string s;
  if (!r.get(key, s)) return;
  try {
    out = parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field(key) + ": " + e.what());
  }
}

template <typename F>
void with_child(ObjectReader& r, const char* key, F&& f) {
  if (auto c = r.child(key)) {
    f(*c);
    c->finish();
  }
}

void read_vision(ObjectReader& r, VisionConfig& v) {
  r.get("image_size", v.image_size);
  r.get("patch_size", v.patch_size);
  r.get("width", v.width);
  r.get("depth", v.depth);
  r.get("heads", v.heads);
  r.get("mlp_ratio", v.mlp_ratio);
}

void read_text(ObjectReader& r, TextConfig& t, bool allow_vocab) {
  r.get("context_length", t.context_length);
  r.get("width", t.width);
  r.get("depth", t.depth);
  r.get("heads", t.heads);
  r.get("mlp_ratio", t.mlp_ratio);
  r.get("causal", t.causal);
  if (allow_vocab) {
    r.get("vocab_size", t.vocab_size);
    r.get("eot_id", t.eot_id);
  }
}

void read_encoder(ObjectReader& r, EncoderConfig& e, bool allow_vocab) {
  r.get("embed_dim", e.embed_dim);
  with_child(r, "vision", [&](ObjectReader& c) { read_vision(c, e.vision); });
  with_child(r, "text", [&](ObjectReader& c) { read_text(c, e.text, allow_vocab); });
  with_child(r, "temperature", [&](ObjectReader& c) {
    c.get("learnable", e.temperature.learnable);
    c.get("init", e.temperature.init);
    c.get("min", e.temperature.min);
    c.get("max", e.temperature.max);
  });
}

json encoder_json(const EncoderConfig& e, bool with_vocab) {
  json text = {{"context_length", e.text.context_length}, {"width", e.text.width},   {"depth", e.text.depth},
               {"heads", e.text.heads},                   {"mlp_ratio", e.text.mlp_ratio}, {"causal", e.text.causal}};
  if (with_vocab) {
    text["vocab_size"] = e.text.vocab_size;
    text["eot_id"] = e.text.eot_id;
  }
  return {
      {"embed_dim", e.embed_dim},
      {"vision",
       {{"image_size", e.vision.image_size},
        {"patch_size", e.vision.patch_size},
        {"width", e.vision.width},
        {"depth", e.vision.depth},
        {"heads", e.vision.heads},
        {"mlp_ratio", e.vision.mlp_ratio}}},
      {"text", text},
      {"temperature",
       {{"learnable", e.temperature.learnable},
        {"init", e.temperature.init},
        {"min", e.temperature.min},
        {"max", e.temperature.max}}},
  };
}

std::string path_string(const std::filesystem::path& p) { return p.generic_string(); }

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig rc;
  ObjectReader root(j, "");
  std::uint64_t seed = 0;
  if (root.get("seed", seed)) rc.seed = seed;
  if (!root.get_path("output_dir", rc.output_dir, base_dir)) rc.output_dir = base_dir / rc.output_dir;

  with_child(root, "dataset", [&](ObjectReader& c) {
    std::filesystem::path p;
    if (c.get_path("manifest", p, base_dir)) rc.manifest = p;
    if (c.get_path("labels", p, base_dir)) rc.labels = p;
  });

  auto& t = rc.train;
  with_child(root, "train", [&](ObjectReader& c) {
    c.get("epochs", t.epochs);
    c.get("batch_size", t.batch_size);
    c.get("base_lr", t.base_lr);
    c.get("final_lr", t.final_lr);
    c.get("warmup_epochs", t.warmup_epochs);
    c.get("weight_decay", t.optimizer.weight_decay);
    c.get("beta1", t.optimizer.beta1);
    c.get("beta2", t.optimizer.beta2);
    c.get("eps", t.optimizer.eps);
    c.get("grad_clip", t.optimizer.grad_clip);
    c.get("eval_every_epoch", t.eval_every_epoch);
    c.get("checkpoint_every", t.checkpoint_every);
    std::string select;
    if (c.get("select", select)) {
      if (select == "best_probe") t.select = CheckpointSelect::kBestProbe;
      else if (select == "last") t.select = CheckpointSelect::kLast;
      else throw ConfigError(c.field("select") + ": expected best_probe|last, got " + select);
    }
  });

  with_child(root, "policy", [&](ObjectReader& c) {
    parse_enum(c, "mode", parse_mode, t.policy.mode);
    c.get("rho", t.policy.rho);
    parse_enum(c, "modality", parse_modality, t.policy.modality);
    parse_enum(c, "image_fn", parse_image_fn, t.policy.image_fn);
    c.get("eda_strength", t.policy.eda_strength);
  });

  with_child(root, "encoder", [&](ObjectReader& c) { read_encoder(c, t.encoder, false); });

  with_child(root, "augment", [&](ObjectReader& c) {
    c.get_range("scale", t.augment.scale_low, t.augment.scale_high);
    c.get_range("ratio", t.augment.ratio_low, t.augment.ratio_high);
    c.get("mean", t.augment.mean);
    c.get("std", t.augment.std);
  });
  t.augment.out_size = t.encoder.vision.image_size;

  with_child(root, "tokenizer", [&](ObjectReader& c) {
    c.get("kind", rc.tokenizer.kind);
    c.get("buckets", rc.tokenizer.buckets);
    c.get_path("vocab", rc.tokenizer.vocab, base_dir);
    c.get_path("merges", rc.tokenizer.merges, base_dir);
    c.get("start_token", rc.tokenizer.specials.start);
    c.get("end_token", rc.tokenizer.specials.end);
    c.get("pad_token", rc.tokenizer.specials.pad);
  });
  if (rc.tokenizer.kind != "hashed" && rc.tokenizer.kind != "bpe")
    throw ConfigError("tokenizer.kind: expected hashed|bpe, got " + rc.tokenizer.kind);

  with_child(root, "probe", [&](ObjectReader& c) {
    c.get_path("manifest", rc.probe.manifest, base_dir);
    c.get_path("labels", rc.probe.labels, base_dir);
    c.get_path("classes", rc.probe.classes, base_dir);
    c.get_path("templates", rc.probe.templates, base_dir);
  });

  with_child(root, "linear_probe", [&](ObjectReader& c) {
    c.get("lr", rc.linear_probe.lr);
    c.get("batch_size", rc.linear_probe.batch_size);
    c.get("epochs", rc.linear_probe.epochs);
    c.get("momentum", rc.linear_probe.momentum);
    c.get("weight_decay", rc.linear_probe.weight_decay);
    c.get("mean_per_class", rc.linear_probe.mean_per_class);
  });

  with_child(root, "synthetic", [&](ObjectReader& c) {
    auto& s = rc.synthetic;
    c.get("num_samples", s.num_samples);
    c.get("resolution", s.resolution);
    c.get("shapes", s.shape_set);
    c.get("colors", s.color_set);
    c.get("templates", s.caption_templates);
    c.get("background", s.background);
    c.get("seed", rc.synthetic_seed);
  });
  root.finish();

  if (rc.seed) t.seed = *rc.seed;
  rc.linear_probe.seed = t.seed;
  rc.synthetic.seed = rc.synthetic_seed.value_or(t.seed);
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file: " + file.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_run_config(text, file.parent_path());
}

std::string resolved_config_json(const RunConfig& rc) {
  const auto& t = rc.train;
  json j;
  j["seed"] = rc.seed ? json(*rc.seed) : json(nullptr);
  j["output_dir"] = path_string(rc.output_dir);
  j["dataset"] = {{"manifest", rc.manifest ? path_string(*rc.manifest) : ""},
                  {"labels", rc.labels ? path_string(*rc.labels) : ""}};
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"base_lr", t.base_lr},
                {"final_lr", t.final_lr},
                {"warmup_epochs", t.warmup_epochs},
                {"weight_decay", t.optimizer.weight_decay},
                {"beta1", t.optimizer.beta1},
                {"beta2", t.optimizer.beta2},
                {"eps", t.optimizer.eps},
                {"grad_clip", t.optimizer.grad_clip ? json(*t.optimizer.grad_clip) : json(nullptr)},
                {"eval_every_epoch", t.eval_every_epoch},
                {"checkpoint_every", t.checkpoint_every},
                {"select", t.select == CheckpointSelect::kBestProbe ? "best_probe" : "last"}};
  j["policy"] = {{"mode", to_string(t.policy.mode)},
                 {"rho", t.policy.rho},
                 {"modality", to_string(t.policy.modality)},
                 {"image_fn", to_string(t.policy.image_fn)},
                 {"eda_strength", t.policy.eda_strength}};
  j["encoder"] = encoder_json(t.encoder, false);
  j["augment"] = {{"scale", {t.augment.scale_low, t.augment.scale_high}},
                  {"ratio", {t.augment.ratio_low, t.augment.ratio_high}},
                  {"mean", t.augment.mean},
                  {"std", t.augment.std}};
  j["tokenizer"] = {{"kind", rc.tokenizer.kind},
                    {"buckets", rc.tokenizer.buckets},
                    {"vocab", path_string(rc.tokenizer.vocab)},
                    {"merges", path_string(rc.tokenizer.merges)},
                    {"start_token", rc.tokenizer.specials.start},
                    {"end_token", rc.tokenizer.specials.end},
                    {"pad_token", rc.tokenizer.specials.pad}};
  j["probe"] = {{"manifest", path_string(rc.probe.manifest)},
                {"labels", path_string(rc.probe.labels)},
                {"classes", path_string(rc.probe.classes)},
                {"templates", path_string(rc.probe.templates)}};
  j["linear_probe"] = {{"lr", rc.linear_probe.lr},
                       {"batch_size", rc.linear_probe.batch_size},
                       {"epochs", rc.linear_probe.epochs},
                       {"momentum", rc.linear_probe.momentum},
                       {"weight_decay", rc.linear_probe.weight_decay},
                       {"mean_per_class", rc.linear_probe.mean_per_class}};
  j["synthetic"] = {{"num_samples", rc.synthetic.num_samples},
                    {"resolution", rc.synthetic.resolution},
                    {"shapes", rc.synthetic.shape_set},
                    {"colors", rc.synthetic.color_set},
                    {"templates", rc.synthetic.caption_templates},
                    {"background", rc.synthetic.background},
                    {"seed", rc.synthetic.seed}};
  return j.dump(2) + "\n";
}

std::unique_ptr<Vocabulary> make_vocabulary(const TokenizerConfig& config) {
  if (config.kind == "hashed") return std::make_unique<HashedWordVocabulary>(config.buckets);
  if (config.kind == "bpe") {
    if (config.vocab.empty() || config.merges.empty())
      throw ConfigError("tokenizer: bpe needs both vocab and merges files");
    return std::make_unique<BpeVocabulary>(BpeVocabulary::load(config.vocab, config.merges, config.specials));
  }
  throw ConfigError("tokenizer.kind: expected hashed|bpe, got " + config.kind);
}

void bind_vocabulary(const Vocabulary& vocab, EncoderConfig& encoder) {
  encoder.text.vocab_size = vocab.size();
  encoder.text.eot_id = vocab.end_id();
}

std::string encoder_config_json(const EncoderConfig& config) { return encoder_json(config, true).dump(); }

EncoderConfig encoder_config_from_json(const std::string& text) {
  EncoderConfig e;
  const json j = json::parse(text);
  ObjectReader r(j, "encoder");
  read_encoder(r, e, true);
  r.finish();
  return e;
}

}  // namespace clipc
