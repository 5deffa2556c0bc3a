#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clipc/dataset.hpp"
#include "clipc/imageproc.hpp"
#include "clipc/model.hpp"
#include "clipc/tensor.hpp"
#include "clipc/textproc.hpp"

namespace clipc {

struct PromptTemplateSet {
  std::vector<std::string> templates;

  /// Each template must contain exactly one "{}" slot.
  void validate() const;
  std::string fill(std::size_t i, const std::string& class_name) const;
};

PromptTemplateSet default_prompt_templates();

struct ClassEmbeddingMatrix {
  MatrixD embeddings;  // K x d, unit rows
  std::vector<std::string> class_names;
};

/// Per class: embed every filled template, average the unit embeddings,
/// re-normalize.
ClassEmbeddingMatrix build_class_embeddings(const DualEncoder& model, const Vocabulary& vocab,
                                            const std::vector<std::string>& class_names,
                                            const PromptTemplateSet& templates);

/// argmax_k <z_I[n], E[k]>, ties to the lowest k.
std::vector<int> zero_shot_classify(const MatrixD& image_embeddings, const MatrixD& class_embeddings);

/// Percentages.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
double mean_per_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct RetrievalReport {
  std::vector<int> ks;
  std::vector<double> image_to_text;  // R@k in percent, aligned with ks
  std::vector<double> text_to_image;
};

/// Row i of each matrix describes the same pair. Ranks use index tie-break.
RetrievalReport retrieval_recall(const MatrixD& image_embeddings, const MatrixD& text_embeddings,
                                 const std::vector<int>& ks = {1, 5});

/// Same, starting from a precomputed N x N similarity matrix.
RetrievalReport retrieval_recall_from_similarity(const MatrixD& similarity, const std::vector<int>& ks = {1, 5});

/// Frozen pre-projection image features (no gradient graph).
Matrix extract_features(const DualEncoder& model, const Matrix& images);

/// resize_eval + normalize for every sample; rows are CHW images.
Matrix eval_image_matrix(const ImageDataset& dataset, const AugmentConfig& augment, int size);

struct ProbeConfig {
  double lr = 0.1;
  int batch_size = 256;
  int epochs = 50;
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool mean_per_class = false;
  std::uint64_t seed = 0;
};

/// Softmax-regression probe trained with momentum SGD and a cosine-decayed
/// learning rate. Returns test accuracy in percent.
double linear_probe(const MatrixD& train_features, const std::vector<int>& train_labels,
                    const MatrixD& test_features, const std::vector<int>& test_labels, const ProbeConfig& config);

/// A labelled evaluation set, ready for zero-shot scoring during training.
struct ZeroShotProbe {
  Matrix images;  // normalized, resize-only
  std::vector<int> labels;
  std::vector<std::string> class_names;
  PromptTemplateSet templates;

  /// Top-1 accuracy in percent.
  double evaluate(const DualEncoder& model, const Vocabulary& vocab) const;
};

/// Builds a probe from a manifest + labels file. Class ids follow
/// `class_names` order; rows whose class is not listed raise DataError.
ZeroShotProbe make_zero_shot_probe(const ImageDataset& dataset, const std::vector<SyntheticLabel>& labels,
                                   const std::vector<std::string>& class_names, PromptTemplateSet templates,
                                   const AugmentConfig& augment, int image_size);

/// Class ids for label rows, in `class_names` order.
std::vector<int> class_ids(const DatasetManifest& manifest, const std::vector<SyntheticLabel>& labels,
                           const std::vector<std::string>& class_names);

}  // namespace clipc
