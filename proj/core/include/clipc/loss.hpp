#pragma once

#include <optional>
#include <vector>

#include "clipc/tensor.hpp"

namespace clipc {

/// S[i][j] = z_I[i] . z_T[j]
MatrixD similarity_matrix(const MatrixD& z_image, const MatrixD& z_text);

struct InfoNceLoss {
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
};

/// Bidirectional InfoNCE over logits S / tau: image-to-text is the mean
/// cross-entropy of each row against its diagonal, text-to-image the same
/// over columns, total their average. Row and column maxima are subtracted
/// before exponentiation.
InfoNceLoss info_nce(const MatrixD& similarity, double tau);

struct InfoNceGradient {
  InfoNceLoss loss;
  MatrixD d_similarity;  // d total / d S
  double d_tau = 0.0;    // d total / d tau
  Eigen::VectorXd per_example;  // 0.5 * (row term + column term)
};

InfoNceGradient info_nce_backward(const MatrixD& similarity, double tau);

/// l_i = 0.5 * (-log softmax_row_i[i] - log softmax_col_i[i]); mean(l) equals total.
Eigen::VectorXd per_example_loss(const MatrixD& similarity, double tau);

struct GroupedLossReport {
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  std::optional<double> composite_loss;
  std::optional<double> plain_loss;
  std::optional<double> composite_cossim;
  std::optional<double> plain_cossim;
  std::size_t composite_count = 0;
  std::size_t plain_count = 0;
};

/// Splits the per-example loss and the matched-pair similarity S[i][i] by
/// `composed_mask`. Empty groups are reported as nullopt.
GroupedLossReport grouped_metrics(const MatrixD& similarity, double tau, const std::vector<bool>& composed_mask);

GroupedLossReport grouped_metrics(const InfoNceGradient& evaluated, const MatrixD& similarity,
                                  const std::vector<bool>& composed_mask);

}  // namespace clipc
