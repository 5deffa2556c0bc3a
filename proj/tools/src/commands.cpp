#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "clipc/checkpoint.hpp"
#include "clipc/config.hpp"
#include "clipc/error.hpp"
#include "clipc/eval.hpp"
#include "clipc/trainer.hpp"

namespace clipc::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

fs::path sibling_or(const std::optional<fs::path>& given, const fs::path& manifest, const char* name) {
  return given ? *given : manifest.parent_path() / name;
}

PromptTemplateSet load_templates(const std::optional<fs::path>& path) {
  if (!path || path->empty()) return default_prompt_templates();
  PromptTemplateSet set;
  for (auto& line : read_lines(*path))
    if (!line.empty()) set.templates.push_back(line);
  set.validate();
  return set;
}

std::vector<std::string> load_class_names(const fs::path& path) {
  std::vector<std::string> names;
  for (auto& line : read_lines(path))
    if (!line.empty()) names.push_back(line);
  if (names.empty()) throw DataError("no class names in " + path.string());
  return names;
}

void write_report(const std::vector<std::pair<std::string, double>>& rows, const std::optional<fs::path>& path,
                  std::ostream& out) {
  std::ostringstream body;
  body << "metric,value\n";
  for (const auto& [name, value] : rows) body << name << ',' << fmt(value) << '\n';
  out << body.str();
  if (!path) return;
  if (path->has_parent_path()) fs::create_directories(path->parent_path());
  std::ofstream f(*path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write report: " + path->string());
  f << body.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<Vocabulary> vocab;
  std::optional<TrainState> state;
};

LoadedModel load_model(const fs::path& config_path, const fs::path& checkpoint) {
  LoadedModel m{load_run_config(config_path), nullptr, std::nullopt};
  m.vocab = make_vocabulary(m.config.tokenizer);
  bind_vocabulary(*m.vocab, m.config.train.encoder);
  m.state.emplace(load_checkpoint(checkpoint, m.config.train.encoder));
  return m;
}

}  // namespace

std::string run_name(const std::string& mode, double rho, const std::string& image_fn, const std::string& modality,
                     std::uint64_t seed) {
  return mode + "_rho" + fmt(rho) + "_" + image_fn + "_" + modality + "_seed" + std::to_string(seed);
}

void synth_gen(const SynthGenArgs& args, std::ostream& out) {
  SyntheticConfig cfg;
  if (args.config) {
    const RunConfig rc = load_run_config(*args.config);
    cfg = rc.synthetic;
  }
  if (args.num_samples) cfg.num_samples = *args.num_samples;
  if (args.resolution) cfg.resolution = *args.resolution;
  if (args.seed) cfg.seed = *args.seed;
  cfg.validate();

  generate_synthetic(cfg, args.out_dir);
  const auto labels = load_labels(args.out_dir / "labels.tsv");
  std::map<std::string, std::size_t> census;
  for (const auto& l : labels) ++census[label_class(l)];
  out << "manifest: " << (args.out_dir / "manifest.tsv").string() << '\n';
  out << "samples: " << labels.size() << ", classes: " << census.size() << '\n';
  for (const auto& [name, count] : census) out << name << '\t' << count << '\n';
}

fs::path train(const TrainArgs& args, std::ostream& out) {
  RunConfig rc = load_run_config(args.config);
  auto& t = rc.train;
  if (args.rho) t.policy.rho = *args.rho;
  if (args.mode) t.policy.mode = parse_mode(*args.mode);
  if (args.image_fn) t.policy.image_fn = parse_image_fn(*args.image_fn);
  if (args.modality) t.policy.modality = parse_modality(*args.modality);
  if (args.epochs) t.epochs = *args.epochs;
  if (args.seed) rc.seed = *args.seed;
  if (!rc.seed) throw ConfigError("seed is required (config key 'seed' or --seed)");
  if (!rc.manifest) throw ConfigError("dataset.manifest is required");
  t.seed = *rc.seed;
  rc.linear_probe.seed = t.seed;

  auto vocab = make_vocabulary(rc.tokenizer);
  bind_vocabulary(*vocab, t.encoder);
  t.validate();

  const fs::path run_dir =
      args.run_dir ? *args.run_dir
                   : rc.output_dir / run_name(to_string(t.policy.mode), t.policy.rho, to_string(t.policy.image_fn),
                                              to_string(t.policy.modality), t.seed);
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "reports");
  write_text(run_dir / "config.resolved", resolved_config_json(rc));

  const ImageDataset dataset(load_manifest(*rc.manifest));
  std::optional<ZeroShotProbe> probe;
  if (rc.probe.enabled()) {
    const ImageDataset probe_set(load_manifest(rc.probe.manifest));
    const auto labels = load_labels(rc.probe.labels.empty() ? rc.probe.manifest.parent_path() / "labels.tsv"
                                                            : rc.probe.labels);
    const auto classes = load_class_names(rc.probe.classes.empty() ? rc.probe.manifest.parent_path() / "classes.txt"
                                                                   : rc.probe.classes);
    std::optional<fs::path> templates;
    if (!rc.probe.templates.empty()) templates = rc.probe.templates;
    probe = make_zero_shot_probe(probe_set, labels, classes, load_templates(templates), t.augment,
                                 t.encoder.vision.image_size);
  }

  TrainOptions opts;
  opts.run_dir = run_dir;
  opts.resume_from = args.resume;
  opts.probe = probe ? &*probe : nullptr;
  opts.on_epoch = [&out](const MetricsRecord& r) { out << format_metrics_row(r) << '\n' << std::flush; };
  out << kMetricsHeader << '\n';
  const TrainResult result = clipc::train(t, dataset, *vocab, opts);

  const bool by_probe = t.select == CheckpointSelect::kBestProbe && result.state.best_probe;
  const fs::path selected =
      by_probe ? run_dir / "checkpoints" / "best" : run_dir / "checkpoints" / ("epoch_" + std::to_string(result.state.epoch));
  out << "run: " << run_dir.string() << '\n';
  out << "selected checkpoint: " << selected.string() << '\n';
  return run_dir;
}

void eval(const EvalArgs& args, std::ostream& out) {
  if (args.task != "zeroshot" && args.task != "retrieval" && args.task != "probe")
    throw ConfigError("--task must be zeroshot, retrieval or probe");
  LoadedModel m = load_model(args.config, args.checkpoint);
  const RunConfig& rc = m.config;
  const DualEncoder& model = m.state->model;
  const int size = rc.train.encoder.vision.image_size;

  const fs::path manifest = args.manifest ? *args.manifest : rc.probe.manifest;
  if (manifest.empty()) throw ConfigError("--manifest is required when the config has no probe.manifest");
  const ImageDataset data(load_manifest(manifest));

  std::optional<fs::path> out_path = args.out;
  if (!out_path && args.checkpoint.parent_path().filename() == "checkpoints")
    out_path = args.checkpoint.parent_path().parent_path() / "reports" / (args.task + ".csv");

  std::vector<std::pair<std::string, double>> rows;
  if (args.task == "zeroshot") {
    const auto labels = load_labels(sibling_or(args.labels, manifest, "labels.tsv"));
    const auto classes = load_class_names(sibling_or(args.classes, manifest, "classes.txt"));
    std::optional<fs::path> templates = args.templates;
    if (!templates && !rc.probe.templates.empty()) templates = rc.probe.templates;
    const ZeroShotProbe probe = make_zero_shot_probe(data, labels, classes, load_templates(templates),
                                                     rc.train.augment, size);
    rows.emplace_back("top1", probe.evaluate(model, *m.vocab));
  } else if (args.task == "retrieval") {
    const Matrix images = eval_image_matrix(data, rc.train.augment, size);
    std::vector<TokenSequence> tokens;
    tokens.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      tokens.push_back(tokenize(data[i].caption, *m.vocab, rc.train.encoder.text.context_length));
    const MatrixD zi = model.encode_images(images).cast<double>();
    const MatrixD zt = model.encode_texts(to_token_matrix(tokens)).cast<double>();
    const RetrievalReport r = retrieval_recall(zi, zt, {1, 5});
    rows.emplace_back("i2t_r1", r.image_to_text[0]);
    rows.emplace_back("i2t_r5", r.image_to_text[1]);
    rows.emplace_back("t2i_r1", r.text_to_image[0]);
    rows.emplace_back("t2i_r5", r.text_to_image[1]);
  } else {
    const fs::path train_manifest = args.train_manifest ? *args.train_manifest
                                    : rc.manifest       ? *rc.manifest
                                                        : fs::path();
    if (train_manifest.empty()) throw ConfigError("--train-manifest is required when the config has no dataset");
    const ImageDataset train_data(load_manifest(train_manifest));
    const auto train_labels_path =
        args.train_labels ? *args.train_labels : (rc.labels ? *rc.labels : train_manifest.parent_path() / "labels.tsv");
    const auto classes = load_class_names(sibling_or(args.classes, manifest, "classes.txt"));
    const auto train_y = class_ids(train_data.manifest(), load_labels(train_labels_path), classes);
    const auto test_y = class_ids(data.manifest(), load_labels(sibling_or(args.labels, manifest, "labels.tsv")), classes);
    const MatrixD train_x = extract_features(model, eval_image_matrix(train_data, rc.train.augment, size)).cast<double>();
    const MatrixD test_x = extract_features(model, eval_image_matrix(data, rc.train.augment, size)).cast<double>();
    rows.emplace_back("probe_top1", linear_probe(train_x, train_y, test_x, test_y, rc.linear_probe));
  }
  write_report(rows, out_path, out);
}

std::size_t export_curves(const ExportArgs& args, std::ostream& out) {
  if (args.inputs.empty()) throw ConfigError("export-curves needs at least one metrics file");
  if (!args.names.empty() && args.names.size() != args.inputs.size())
    throw ConfigError("--name must be given once per input file");

  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < args.inputs.size(); ++i) {
    std::string name = args.names.empty() ? args.inputs[i].parent_path().filename().string() : args.names[i];
    if (name.empty()) name = args.inputs[i].stem().string();
    if (!seen.insert(name).second) throw ConfigError("duplicate run name: " + name);
    names.push_back(name);
  }

  std::ostringstream body;
  body << "run,epoch,metric,value\n";
  std::size_t rows = 0;
  for (std::size_t i = 0; i < args.inputs.size(); ++i) {
    for (const auto& r : read_metrics_csv(args.inputs[i])) {
      const std::pair<const char*, std::optional<double>> cells[] = {
          {"lr", r.lr},
          {"total", r.total},
          {"i2t", r.i2t},
          {"t2i", r.t2i},
          {"composite_loss", r.composite_loss},
          {"plain_loss", r.plain_loss},
          {"composite_cossim", r.composite_cossim},
          {"plain_cossim", r.plain_cossim},
          {"probe_acc", r.probe_acc},
      };
      for (const auto& [metric, value] : cells) {
        if (!value) continue;
        body << names[i] << ',' << r.epoch << ',' << metric << ',' << fmt(*value) << '\n';
        ++rows;
      }
    }
  }
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  write_text(args.out, body.str());
  out << "wrote " << rows << " rows to " << args.out.string() << '\n';
  return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive image-text pretraining with semantic composition"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthGenArgs sg;
  auto* synth = app.add_subcommand("synth-gen", "Render the synthetic shapes-and-captions dataset");
  synth->add_option("--config", sg.config, "Run config (reads the synthetic section)")->check(CLI::ExistingFile);
  synth->add_option("--out", sg.out_dir, "Output directory")->required();
  synth->add_option("--num-samples", sg.num_samples, "Number of pairs")->default_str("4096");
  synth->add_option("--resolution", sg.resolution, "Image side in pixels")->default_str("64");
  synth->add_option("--seed", sg.seed, "Generator seed")->default_str("0");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a dual encoder");
  tr->add_option("--config", ta.config, "Run config")->required()->check(CLI::ExistingFile);
  tr->add_option("--rho", ta.rho, "Composition probability")->default_str("policy.rho");
  tr->add_option("--mode", ta.mode, "none|dynamic|fixed|stylistic")->default_str("policy.mode");
  tr->add_option("--image-fn", ta.image_fn, "center_half|cutmix|mixup")->default_str("policy.image_fn");
  tr->add_option("--modality", ta.modality, "both|text|image")->default_str("policy.modality");
  tr->add_option("--seed", ta.seed, "Training seed (required unless set in the config)");
  tr->add_option("--epochs", ta.epochs, "Training epochs")->default_str("train.epochs");
  tr->add_option("--run-dir", ta.run_dir, "Run directory")->default_str("<output_dir>/<mode>_rho<rho>_<fn>_<modality>_seed<seed>");
  tr->add_option("--resume", ta.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--config", ea.config, "Run config the checkpoint was trained with")->required()->check(CLI::ExistingFile);
  ev->add_option("--task", ea.task, "zeroshot|retrieval|probe");
  ev->add_option("--manifest", ea.manifest, "Evaluation manifest")->default_str("probe.manifest from config");
  ev->add_option("--labels", ea.labels, "Label file")->default_str("labels.tsv next to the manifest");
  ev->add_option("--classes", ea.classes, "Class names")->default_str("classes.txt next to the manifest");
  ev->add_option("--templates", ea.templates, "Prompt templates, one per line")->default_str("built-in set");
  ev->add_option("--train-manifest", ea.train_manifest, "Linear probe training manifest")->default_str("dataset.manifest");
  ev->add_option("--train-labels", ea.train_labels, "Linear probe training labels")->default_str("labels.tsv next to it");
  ev->add_option("--out", ea.out, "Report CSV")->default_str("<run>/reports/<task>.csv");

  ExportArgs xa;
  auto* ex = app.add_subcommand("export-curves", "Merge metrics files into long-format curve data");
  ex->add_option("inputs", xa.inputs, "metrics.csv files")->required()->check(CLI::ExistingFile);
  ex->add_option("--name", xa.names, "Run name per input")->default_str("parent directory name");
  ex->add_option("--out", xa.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) synth_gen(sg, out);
    if (*tr) train(ta, out);
    if (*ev) eval(ea, out);
    if (*ex) export_curves(xa, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace clipc::cli
