// Acceptance harness: prints one PASS/FAIL line per criterion. Criterion 7
// is reported but never affects the exit code.

#include <malloc.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "clipc/checkpoint.hpp"
#include "clipc/config.hpp"
#include "clipc/eval.hpp"
#include "clipc/loss.hpp"
#include "clipc/optim.hpp"
#include "clipc/sampler.hpp"
#include "clipc/trainer.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace clipc;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

MatrixD unit_rows(int n, int d, Rng& rng) {
  MatrixD m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    m.row(i).normalize();
  }
  return m;
}

// Direct evaluation of the bidirectional loss in long double, no max shift.
long double brute_force_loss(const MatrixD& s, double tau) {
  const auto n = s.rows();
  long double rows = 0, cols = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    long double zr = 0, zc = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      zr += std::exp(static_cast<long double>(s(i, j)) / tau);
      zc += std::exp(static_cast<long double>(s(j, i)) / tau);
    }
    const long double diag = static_cast<long double>(s(i, i)) / tau;
    rows += std::log(zr) - diag;
    cols += std::log(zc) - diag;
  }
  return 0.5L * (rows / n + cols / n);
}

Verdict loss_oracle() {
  Rng rng(101);
  const double taus[] = {0.01, 0.07, 1.0};
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int b = 1 + static_cast<int>(rng.below(64)), d = 1 + static_cast<int>(rng.below(64));
    const double tau = taus[t % 3];
    const MatrixD s = similarity_matrix(unit_rows(b, d, rng), unit_rows(b, d, rng));
    const long double ref = brute_force_loss(s, tau);
    const double got = info_nce(s, tau).total;
    const double rel = std::abs(static_cast<double>(got - ref)) / std::max(std::abs(static_cast<double>(ref)), 1e-300);
    if (b > 1) worst = std::max(worst, rel);
    else if (got != 0.0) return {false, "B=1 loss is not zero"};
  }
  const bool single_zero = info_nce(MatrixD::Constant(1, 1, 0.37), 0.07).total == 0.0;
  double uniform_err = 0.0;
  for (int b : {2, 16, 64, 256}) uniform_err = std::max(uniform_err, std::abs(info_nce(MatrixD::Constant(b, b, 0.2), 0.07).total - std::log(b)));
  return {worst <= 1e-6 && single_zero && uniform_err <= 1e-9,
          "max rel err " + fmt("%.2e", worst) + ", uniform |L - ln B| " + fmt("%.2e", uniform_err)};
}

Verdict gradient_check() {
  Rng rng(202);
  const double tau = 0.07, h = 1e-4;
  const MatrixD s = similarity_matrix(unit_rows(8, 16, rng), unit_rows(8, 16, rng));
  const auto g = info_nce_backward(s, tau);
  double worst = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      MatrixD up = s, down = s;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (info_nce(up, tau).total - info_nce(down, tau).total) / (2 * h);
      worst = std::max(worst, std::abs(g.d_similarity(i, j) - fd) / std::max(std::abs(fd), 1e-8));
    }
  return {worst <= 1e-4, "max rel err " + fmt("%.2e", worst)};
}

Verdict composition_statistics() {
  std::vector<std::size_t> slots(100);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  CompositionPolicy p;
  p.rho = 0.3;
  std::size_t total = 0, composed = 0, a_first = 0, horizontal = 0;
  for (std::uint64_t step = 0; step < 120; ++step)
    for (const auto& s : plan_batch(0, step, slots, p, 100, 5).slots) {
      ++total;
      if (!s.composed) continue;
      ++composed;
      a_first += s.order == OrderFlag::kAFirst;
      horizontal += s.axis == Axis::kHorizontal;
    }
  const double frac = static_cast<double>(composed) / total;
  const double fa = static_cast<double>(a_first) / composed, fh = static_cast<double>(horizontal) / composed;

  p.rho = 1.0;
  std::size_t repeats = 0, pairs = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    const auto e1 = plan_batch(2 * trial, 0, slots, p, 100, 9);
    const auto e2 = plan_batch(2 * trial + 1, 0, slots, p, 100, 9);
    for (std::size_t i = 0; i < slots.size(); ++i, ++pairs) repeats += e1.slots[i].partner == e2.slots[i].partner;
  }
  const double q = 1.0 / 99.0, rep = static_cast<double>(repeats) / pairs;
  const double sd = std::sqrt(q * (1 - q) / pairs);
  const bool ok = frac >= 0.2863 && frac <= 0.3137 && fa >= 0.485 && fa <= 0.515 && fh >= 0.485 && fh <= 0.515 &&
                  std::abs(rep - q) <= 3 * sd;
  std::ostringstream d;
  d << total << " slots, composed " << fmt("%.4f", frac) << ", A-first " << fmt("%.4f", fa) << ", horizontal "
    << fmt("%.4f", fh) << ", repeat " << fmt("%.5f", rep) << " vs " << fmt("%.5f", q);
  return {ok, d.str()};
}

ImageTensor random_image(int size, Rng& rng) {
  ImageTensor t(size, size, Stage::kRaw8);
  for (auto& v : t.data) v = static_cast<float>(rng.below(256));
  return t;
}

Verdict image_exactness() {
  Rng rng(303);
  for (int t = 0; t < 100; ++t) {
    const int s = 2 * (4 + static_cast<int>(rng.below(60)));
    const auto a = random_image(s, rng), b = random_image(s, rng);
    const int q = s / 4, half = s / 2;
    const auto h = compose_center_half(a, b, Axis::kHorizontal);
    const auto v = compose_center_half(a, b, Axis::kVertical);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const float want_h = x < half ? a.at(c, y, x + q) : b.at(c, y, x - half + q);
          const float want_v = y < half ? a.at(c, y + q, x) : b.at(c, y - half + q, x);
          if (h.at(c, y, x) != want_h || v.at(c, y, x) != want_v)
            return {false, "provenance mismatch at size " + std::to_string(s)};
        }
    if (!(mixup(a, b, 1.0) == a)) return {false, "mixup(a, b, 1) differs from a"};
    Rng r(static_cast<std::uint64_t>(t));
    if (!(cutmix(a, b, 1.0, r) == a)) return {false, "cutmix at omega 1 differs from a"};
  }
  return {true, "100 pairs scanned"};
}

Verdict schedule_and_optimizer() {
  const std::int64_t per_epoch = 16, total = 40 * per_epoch, warm = 5 * per_epoch;
  const bool peak = lr_at(warm, total, warm, 0.003, 1e-5) == 0.003;
  const bool tail = lr_at(total, total, warm, 0.003, 1e-5) == 1e-5;
  Rng rng(404);
  std::vector<Parameter> ps;
  ps.emplace_back("w", 7, 5, true);
  for (Eigen::Index i = 0; i < ps[0].value.size(); ++i) ps[0].value.data()[i] = rng.normal();
  const MatrixD before = ps[0].value;
  AdamW opt;
  opt.step(ps, 0.003);
  const double err = (ps[0].value - before * (1 - 0.003 * 0.1)).cwiseAbs().maxCoeff();
  return {peak && tail && err <= 1e-12,
          std::string("lr peak ") + (peak ? "exact" : "off") + ", lr end " + (tail ? "exact" : "off") +
              ", decay err " + fmt("%.1e", err)};
}

Verdict evaluation_metrics() {
  std::vector<int> labels(100, 0), preds(100, 0);
  std::fill(labels.begin() + 90, labels.end(), 1);
  const bool skew = accuracy(preds, labels) == 90.0 && mean_per_class_accuracy(preds, labels) == 50.0;

  Rng rng(505);
  bool monotone = true;
  for (int t = 0; t < 1000 && monotone; ++t) {
    const int n = 11 + static_cast<int>(rng.below(40));
    MatrixD s(n, n);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.below(4) == 0 ? 0.5 : rng.normal();
    const auto r = retrieval_recall_from_similarity(s, {1, 2, 5, 10, n - 1});
    for (std::size_t k = 1; k < r.ks.size(); ++k)
      monotone = monotone && r.image_to_text[k] >= r.image_to_text[k - 1] && r.text_to_image[k] >= r.text_to_image[k - 1];
  }

  bool invariant = true;
  for (int t = 0; t < 100 && invariant; ++t) {
    const int n = 1 + static_cast<int>(rng.below(50)), k = 2 + static_cast<int>(rng.below(20)), d = 2 + static_cast<int>(rng.below(30));
    const MatrixD img = unit_rows(n, d, rng), cls = unit_rows(k, d, rng);
    MatrixD scaled = img;
    for (int i = 0; i < n; ++i) scaled.row(i) *= std::exp(rng.uniform(-5.0, 5.0));
    invariant = zero_shot_classify(img, cls) == zero_shot_classify(scaled, cls);
  }
  return {skew && monotone && invariant, std::string("skewed ") + (skew ? "ok" : "wrong") + ", monotone " +
                                             (monotone ? "ok" : "violated") + ", scale invariance " +
                                             (invariant ? "ok" : "violated")};
}

// Desk-scale training shared by criteria 5-7.
struct Desk {
  fs::path work;
  RunConfig rc;
  std::unique_ptr<Vocabulary> vocab;
  std::unique_ptr<ImageDataset> train;
  std::unique_ptr<ImageDataset> heldout;
  std::unique_ptr<ZeroShotProbe> probe;

  TrainConfig config(std::uint64_t seed, double rho) const {
    TrainConfig c = rc.train;
    c.seed = seed;
    c.policy.rho = rho;
    c.checkpoint_every = c.epochs / 2;
    return c;
  }

  TrainResult run(const TrainConfig& c, const std::string& name, std::optional<fs::path> resume = {}) const {
    TrainOptions o;
    o.run_dir = work / "runs" / name;
    o.resume_from = std::move(resume);
    o.probe = probe.get();
    fs::create_directories(*o.run_dir);
    std::cerr << "  training " << name << '\n';
    return clipc::train(c, *train, *vocab, o);
  }

  double zero_shot(const DualEncoder& m) const { return probe->evaluate(m, *vocab); }

  RetrievalReport retrieval(const DualEncoder& m) const {
    const Matrix images = eval_image_matrix(*heldout, rc.train.augment, rc.train.encoder.vision.image_size);
    std::vector<TokenSequence> tokens;
    for (std::size_t i = 0; i < heldout->size(); ++i)
      tokens.push_back(tokenize((*heldout)[i].caption, *vocab, rc.train.encoder.text.context_length));
    return retrieval_recall(m.encode_images(images).cast<double>(), m.encode_texts(to_token_matrix(tokens)).cast<double>(),
                            {1, 5});
  }
};

Desk make_desk(const fs::path& work) {
  Desk d;
  d.work = work;
  fs::remove_all(work / "runs");
  SyntheticConfig sc;
  sc.num_samples = 4096;
  sc.seed = 1;
  generate_synthetic(sc, work / "data" / "train");
  sc.num_samples = 512;
  sc.seed = 2;
  generate_synthetic(sc, work / "data" / "heldout");

  d.rc = load_run_config(fs::path(CLIPC_CONFIG_DIR) / "compact.json");
  d.vocab = make_vocabulary(d.rc.tokenizer);
  bind_vocabulary(*d.vocab, d.rc.train.encoder);
  d.train = std::make_unique<ImageDataset>(load_manifest(work / "data" / "train" / "manifest.tsv"));
  d.heldout = std::make_unique<ImageDataset>(load_manifest(work / "data" / "heldout" / "manifest.tsv"));
  d.probe = std::make_unique<ZeroShotProbe>(make_zero_shot_probe(
      *d.heldout, load_labels(work / "data" / "heldout" / "labels.tsv"),
      read_lines(work / "data" / "heldout" / "classes.txt"), default_prompt_templates(), d.rc.train.augment,
      d.rc.train.encoder.vision.image_size));
  return d;
}

double first_third_gap(const std::vector<MetricsRecord>& rows, int epochs, double& comp, double& plain) {
  comp = plain = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.epoch <= epochs / 3 && r.composite_loss && r.plain_loss) {
      comp += *r.composite_loss;
      plain += *r.plain_loss;
      ++n;
    }
  comp /= n;
  plain /= n;
  return plain - comp;
}

void report(int id, const char* title, const Verdict& v, bool soft = false) {
  std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << (soft ? " (soft)" : "") << " - " << title
            << " [" << v.detail << "]" << std::endl;
}

Verdict guarded(const std::function<Verdict()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Acceptance checks"};
  fs::path work = fs::temp_directory_path() / "clipc_acceptance";
  int seeds = 5;
  bool quick = false;
  app.add_option("--work-dir", work, "Scratch directory for data and runs");
  app.add_option("--seeds", seeds, "Seeds for the directional comparison")->check(CLI::PositiveNumber);
  app.add_flag("--quick", quick, "Skip the training criteria (5-7)");
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  auto gate = [&](int id, const char* title, const Verdict& v) {
    report(id, title, v);
    all = all && v.pass;
  };

  gate(1, "loss oracle", guarded(loss_oracle));
  gate(2, "gradient check", guarded(gradient_check));
  gate(3, "composition statistics", guarded(composition_statistics));
  gate(4, "image composition exactness", guarded(image_exactness));

  if (!quick) {
    std::optional<Desk> desk;
    std::optional<TrainResult> reference;
    const Verdict setup = guarded([&] {
      desk.emplace(make_desk(work));
      return Verdict{true, ""};
    });

    gate(5, "determinism", !setup.pass ? setup : guarded([&] {
      const auto c = desk->config(0, 0.3);
      reference.emplace(desk->run(c, "a"));
      desk->run(c, "b");
      const auto a_csv = testing::read_file(work / "runs" / "a" / "metrics.csv");
      const bool same = a_csv == testing::read_file(work / "runs" / "b" / "metrics.csv");
      const int mid = c.epochs / 2;
      fs::create_directories(work / "runs" / "c");
      fs::copy_file(work / "runs" / "b" / "metrics.csv", work / "runs" / "c" / "metrics.csv",
                    fs::copy_options::overwrite_existing);
      desk->run(c, "c", work / "runs" / "b" / "checkpoints" / ("epoch_" + std::to_string(mid)));
      const bool resumed = a_csv == testing::read_file(work / "runs" / "c" / "metrics.csv");
      return Verdict{same && resumed, std::string("repeat run ") + (same ? "identical" : "differs") + ", resume at epoch " +
                                          std::to_string(mid) + (resumed ? " identical" : " differs")};
    }));

    gate(6, "desk-scale learning", !reference ? Verdict{false, "no reference run"} : guarded([&] {
      const auto& m = reference->state.model;
      const double zs = desk->zero_shot(m);
      const auto r = desk->retrieval(m);
      const double chance_k = 100.0 / static_cast<double>(desk->probe->class_names.size());
      const double chance_n = 100.0 / static_cast<double>(desk->heldout->size());
      const bool ok = zs > 4 * chance_k && r.image_to_text[0] > 10 * chance_n && r.text_to_image[0] > 10 * chance_n;
      return Verdict{ok, "zero-shot " + fmt("%.2f", zs) + "% (> " + fmt("%.2f", 4 * chance_k) + "), R@1 i2t " +
                             fmt("%.2f", r.image_to_text[0]) + "% t2i " + fmt("%.2f", r.text_to_image[0]) + "% (> " +
                             fmt("%.2f", 10 * chance_n) + ")"};
    }));

    // Soft: reported, never gated.
    std::ostringstream lines;
    const Verdict soft = !reference ? Verdict{false, "no reference run"} : guarded([&] {
      int wins_zs = 0, wins_fast = 0;
      for (int s = 0; s < seeds; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        const TrainResult comp = s == 0 ? std::move(*reference)
                                        : desk->run(desk->config(seed, 0.3), "seed" + std::to_string(s) + "_rho0.3");
        const TrainResult base = desk->run(desk->config(seed, 0.0), "seed" + std::to_string(s) + "_rho0");
        const double zc = desk->zero_shot(comp.state.model), zb = desk->zero_shot(base.state.model);
        double cl = 0, pl = 0;
        const double gap = first_third_gap(comp.metrics, desk->rc.train.epochs, cl, pl);
        wins_zs += zc >= zb;
        wins_fast += gap > 0;
        lines << "  seed " << s << ": zero-shot rho=0.3 " << fmt("%.2f", zc) << "% vs rho=0 " << fmt("%.2f", zb)
              << "%; early composite_loss " << fmt("%.4f", cl) << " vs plain_loss " << fmt("%.4f", pl) << '\n';
      }
      const bool a = 2 * wins_zs > seeds, b = 2 * wins_fast > seeds;
      return Verdict{a && b, "(a) zero-shot >= baseline in " + std::to_string(wins_zs) + "/" + std::to_string(seeds) +
                                 " seeds: " + (a ? "pass" : "fail") + "; (b) composite faster in " +
                                 std::to_string(wins_fast) + "/" + std::to_string(seeds) + " seeds: " +
                                 (b ? "pass" : "fail")};
    });
    report(7, "directional claims", soft, true);
    std::cout << lines.str();
  } else {
    std::cout << "criterion 5: SKIPPED - determinism\ncriterion 6: SKIPPED - desk-scale learning\n"
                 "criterion 7: SKIPPED (soft) - directional claims\n";
  }

  gate(8, "schedule and optimizer units", guarded(schedule_and_optimizer));
  gate(9, "evaluation metrics", guarded(evaluation_metrics));
  std::cout << (all ? "acceptance: all gated criteria passed" : "acceptance: FAILED") << std::endl;
  return all ? 0 : 1;
}
