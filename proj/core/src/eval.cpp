#include "clipc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "clipc/error.hpp"
#include "clipc/rng.hpp"

namespace clipc {

void PromptTemplateSet::validate() const {
  if (templates.empty()) throw ConfigError("prompt templates: need at least one template");
  for (const auto& t : templates) {
    const auto first = t.find("{}");
    if (first == std::string::npos || t.find("{}", first + 2) != std::string::npos)
      throw ConfigError("prompt template must contain exactly one {} slot: " + t);
  }
}

std::string PromptTemplateSet::fill(std::size_t i, const std::string& class_name) const {
  std::string s = templates.at(i);
  s.replace(s.find("{}"), 2, class_name);
  return s;
}

PromptTemplateSet default_prompt_templates() {
  return {{"a photo of a {}", "a {}", "a drawing of a {}", "a small {} on a dark background"}};
}

ClassEmbeddingMatrix build_class_embeddings(const DualEncoder& model, const Vocabulary& vocab,
                                            const std::vector<std::string>& class_names,
                                            const PromptTemplateSet& templates) {
  if (class_names.empty()) throw std::invalid_argument("build_class_embeddings: empty class list");
  templates.validate();
  const int ctx = model.config().text.context_length;
  const std::size_t nt = templates.templates.size();

  std::vector<TokenSequence> prompts;
  prompts.reserve(class_names.size() * nt);
  for (const auto& name : class_names)
    for (std::size_t t = 0; t < nt; ++t) prompts.push_back(tokenize(templates.fill(t, name), vocab, ctx));
  const MatrixD z = model.encode_texts(to_token_matrix(prompts)).cast<double>();

  ClassEmbeddingMatrix out;
  out.class_names = class_names;
  out.embeddings.resize(static_cast<Eigen::Index>(class_names.size()), z.cols());
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(z.cols());
    for (std::size_t t = 0; t < nt; ++t) mean += z.row(static_cast<Eigen::Index>(k * nt + t)).normalized();
    mean /= static_cast<double>(nt);
    out.embeddings.row(static_cast<Eigen::Index>(k)) = mean.normalized();
  }
  return out;
}

std::vector<int> zero_shot_classify(const MatrixD& image_embeddings, const MatrixD& class_embeddings) {
  if (image_embeddings.cols() != class_embeddings.cols())
    throw std::invalid_argument("zero_shot_classify: embedding dimensions differ");
  if (class_embeddings.rows() == 0) throw std::invalid_argument("zero_shot_classify: no classes");
  const MatrixD scores = image_embeddings * class_embeddings.transpose();
  std::vector<int> preds(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(n, k) > scores(n, best)) best = k;
    preds[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return preds;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

double mean_per_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw std::invalid_argument("mean_per_class_accuracy: empty input");
  if (predictions.size() != labels.size()) throw std::invalid_argument("mean_per_class_accuracy: length mismatch");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // label -> (hits, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, total] = per_class[labels[i]];
    ++total;
    hits += predictions[i] == labels[i] ? 1 : 0;
  }
  double sum = 0.0;
  for (const auto& [label, ht] : per_class) sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return 100.0 * sum / static_cast<double>(per_class.size());
}

RetrievalReport retrieval_recall_from_similarity(const MatrixD& s, const std::vector<int>& ks) {
  if (s.rows() != s.cols()) throw std::invalid_argument("retrieval_recall: similarity must be square");
  const Eigen::Index n = s.rows();
  for (int k : ks)
    if (k < 1 || k >= n) throw std::invalid_argument("retrieval_recall: need N > max(ks) and k >= 1");

  // rank of the true match: strictly better candidates plus equal ones at a lower index.
  std::vector<Eigen::Index> rank_i2t(static_cast<std::size_t>(n)), rank_t2i(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index ri = 0, rt = 0;
    const double target = s(i, i);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s(i, j) > target || (s(i, j) == target && j < i)) ++ri;
      if (s(j, i) > target || (s(j, i) == target && j < i)) ++rt;
    }
    rank_i2t[static_cast<std::size_t>(i)] = ri;
    rank_t2i[static_cast<std::size_t>(i)] = rt;
  }
  RetrievalReport r;
  r.ks = ks;
  for (int k : ks) {
    const auto hit = [k](Eigen::Index rank) { return rank < k; };
    r.image_to_text.push_back(100.0 * static_cast<double>(std::count_if(rank_i2t.begin(), rank_i2t.end(), hit)) /
                              static_cast<double>(n));
    r.text_to_image.push_back(100.0 * static_cast<double>(std::count_if(rank_t2i.begin(), rank_t2i.end(), hit)) /
                              static_cast<double>(n));
  }
  return r;
}

RetrievalReport retrieval_recall(const MatrixD& image_embeddings, const MatrixD& text_embeddings,
                                 const std::vector<int>& ks) {
  if (image_embeddings.rows() != text_embeddings.rows() || image_embeddings.cols() != text_embeddings.cols())
    throw std::invalid_argument("retrieval_recall: embedding shapes differ");
  return retrieval_recall_from_similarity(image_embeddings * text_embeddings.transpose(), ks);
}

Matrix extract_features(const DualEncoder& model, const Matrix& images) { return model.extract_image_features(images); }

Matrix eval_image_matrix(const ImageDataset& dataset, const AugmentConfig& augment, int size) {
  std::vector<ImageTensor> images;
  images.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    images.push_back(normalize(resize_eval(to_tensor(dataset[i].image), size), augment.mean, augment.std));
  return to_image_matrix(images);
}

double linear_probe(const MatrixD& train_features, const std::vector<int>& train_labels,
                    const MatrixD& test_features, const std::vector<int>& test_labels, const ProbeConfig& config) {
  if (train_features.rows() != static_cast<Eigen::Index>(train_labels.size()) ||
      test_features.rows() != static_cast<Eigen::Index>(test_labels.size()))
    throw std::invalid_argument("linear_probe: feature/label count mismatch");
  if (train_features.cols() != test_features.cols()) throw std::invalid_argument("linear_probe: feature widths differ");
  if (train_labels.empty() || test_labels.empty()) throw std::invalid_argument("linear_probe: empty split");
  if (config.batch_size < 1 || config.epochs < 0) throw std::invalid_argument("linear_probe: invalid config");
  const std::set<int> distinct(train_labels.begin(), train_labels.end());
  if (distinct.size() < 2) throw std::invalid_argument("linear_probe: training labels contain a single class");
  int num_classes = 0;
  for (int l : train_labels) num_classes = std::max(num_classes, l + 1);
  for (int l : test_labels) num_classes = std::max(num_classes, l + 1);
  if (*distinct.begin() < 0) throw std::invalid_argument("linear_probe: negative label");

  const Eigen::Index f = train_features.cols();
  const Eigen::Index n = train_features.rows();
  Rng init(derive_key({config.seed, static_cast<std::uint64_t>(Stream::kProbe), 0}));
  MatrixD w(f, num_classes);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = 0.01 * init.normal();
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(num_classes);
  MatrixD vw = MatrixD::Zero(f, num_classes);
  Eigen::RowVectorXd vb = Eigen::RowVectorXd::Zero(num_classes);

  const Eigen::Index steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch) * config.epochs;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffle(derive_key({config.seed, static_cast<std::uint64_t>(Stream::kProbe), static_cast<std::uint64_t>(epoch) + 1}));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    for (Eigen::Index s = 0; s < steps_per_epoch; ++s, ++step) {
      const Eigen::Index lo = s * config.batch_size;
      const Eigen::Index m = std::min<Eigen::Index>(config.batch_size, n - lo);
      MatrixD x(m, f);
      for (Eigen::Index r = 0; r < m; ++r) x.row(r) = train_features.row(order[static_cast<std::size_t>(lo + r)]);
      MatrixD logits = x * w;
      logits.rowwise() += b;
      for (Eigen::Index r = 0; r < m; ++r) {
        const double mx = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - mx).exp();
        logits.row(r) /= logits.row(r).sum();
        logits(r, train_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(lo + r)])]) -= 1.0;
      }
      logits /= static_cast<double>(m);
      MatrixD gw = x.transpose() * logits;
      if (config.weight_decay != 0.0) gw += config.weight_decay * w;
      const Eigen::RowVectorXd gb = logits.colwise().sum();
      const double lr = 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
      vw = config.momentum * vw + gw;
      vb = config.momentum * vb + gb;
      w -= lr * vw;
      b -= lr * vb;
    }
  }

  MatrixD scores = test_features * w;
  scores.rowwise() += b;
  std::vector<int> preds(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(r, k) > scores(r, best)) best = k;
    preds[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return config.mean_per_class ? mean_per_class_accuracy(preds, test_labels) : accuracy(preds, test_labels);
}

double ZeroShotProbe::evaluate(const DualEncoder& model, const Vocabulary& vocab) const {
  const auto classes = build_class_embeddings(model, vocab, class_names, templates);
  const MatrixD z = model.encode_images(images).cast<double>();
  return accuracy(zero_shot_classify(z, classes.embeddings), labels);
}

std::vector<int> class_ids(const DatasetManifest& manifest, const std::vector<SyntheticLabel>& labels,
                           const std::vector<std::string>& class_names) {
  std::unordered_map<std::string, int> name_to_id;
  for (std::size_t k = 0; k < class_names.size(); ++k) name_to_id.emplace(class_names[k], static_cast<int>(k));
  std::unordered_map<std::string, int> path_to_id;
  for (const auto& l : labels) {
    const auto it = name_to_id.find(label_class(l));
    if (it == name_to_id.end()) throw DataError("label class not in class list: " + label_class(l));
    path_to_id[l.image.generic_string()] = it->second;
  }
  std::vector<int> ids;
  ids.reserve(manifest.size());
  for (const auto& e : manifest.entries) {
    const auto it = path_to_id.find(e.image.generic_string());
    if (it == path_to_id.end()) throw DataError("no label for image " + e.image.generic_string());
    ids.push_back(it->second);
  }
  return ids;
}

ZeroShotProbe make_zero_shot_probe(const ImageDataset& dataset, const std::vector<SyntheticLabel>& labels,
                                   const std::vector<std::string>& class_names, PromptTemplateSet templates,
                                   const AugmentConfig& augment, int image_size) {
  templates.validate();
  ZeroShotProbe probe;
  probe.labels = class_ids(dataset.manifest(), labels, class_names);
  probe.images = eval_image_matrix(dataset, augment, image_size);
  probe.class_names = class_names;
  probe.templates = std::move(templates);
  return probe;
}

}  // namespace clipc
