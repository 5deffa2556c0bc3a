#include "clipc/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace clipc {

namespace {

void check_square(const MatrixD& s, double tau) {
  if (s.rows() != s.cols()) throw std::invalid_argument("info_nce: similarity matrix must be square");
  if (s.rows() == 0) throw std::invalid_argument("info_nce: empty batch");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
}

// Row-wise softmax of `logits` with max subtraction; also returns log of the
// diagonal probability per row.
MatrixD row_softmax(const MatrixD& logits, Eigen::VectorXd& log_diag) {
  const Eigen::Index n = logits.rows();
  MatrixD p(n, logits.cols());
  log_diag.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    const double sum = p.row(i).sum();
    p.row(i) /= sum;
    log_diag(i) = logits(i, i) - mx - std::log(sum);
  }
  return p;
}

}  // namespace

MatrixD similarity_matrix(const MatrixD& z_image, const MatrixD& z_text) {
  if (z_image.rows() != z_text.rows() || z_image.cols() != z_text.cols())
    throw std::invalid_argument("similarity_matrix: embedding shapes differ");
  MatrixD s;
  s.noalias() = z_image * z_text.transpose();
  return s;
}

InfoNceGradient info_nce_backward(const MatrixD& similarity, double tau) {
  check_square(similarity, tau);
  const Eigen::Index b = similarity.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  const MatrixD logits = similarity / tau;

  Eigen::VectorXd log_row, log_col;
  const MatrixD p_row = row_softmax(logits, log_row);
  const MatrixD p_col_t = row_softmax(logits.transpose(), log_col);

  InfoNceGradient g;
  g.loss.i2t = -log_row.mean();
  g.loss.t2i = -log_col.mean();
  g.loss.total = 0.5 * (g.loss.i2t + g.loss.t2i);
  g.per_example = -0.5 * (log_row + log_col);

  // d total / d logits = 0.5 * ((P_row - I) + (P_col - I)) / B
  MatrixD d_logits = 0.5 * inv_b * (p_row + p_col_t.transpose());
  d_logits.diagonal().array() -= inv_b;
  g.d_similarity = d_logits / tau;
  g.d_tau = -(d_logits.array() * similarity.array()).sum() / (tau * tau);
  return g;
}

InfoNceLoss info_nce(const MatrixD& similarity, double tau) { return info_nce_backward(similarity, tau).loss; }

Eigen::VectorXd per_example_loss(const MatrixD& similarity, double tau) {
  return info_nce_backward(similarity, tau).per_example;
}

GroupedLossReport grouped_metrics(const InfoNceGradient& evaluated, const MatrixD& similarity,
                                  const std::vector<bool>& composed_mask) {
  const auto b = static_cast<std::size_t>(similarity.rows());
  if (composed_mask.size() != b)
    throw std::invalid_argument("grouped_metrics: mask length " + std::to_string(composed_mask.size()) +
                                " != batch " + std::to_string(b));
  GroupedLossReport r;
  r.total = evaluated.loss.total;
  r.i2t = evaluated.loss.i2t;
  r.t2i = evaluated.loss.t2i;
  double loss_c = 0.0, loss_p = 0.0, sim_c = 0.0, sim_p = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (composed_mask[i]) {
      ++r.composite_count;
      loss_c += evaluated.per_example(k);
      sim_c += similarity(k, k);
    } else {
      ++r.plain_count;
      loss_p += evaluated.per_example(k);
      sim_p += similarity(k, k);
    }
  }
  if (r.composite_count) {
    r.composite_loss = loss_c / static_cast<double>(r.composite_count);
    r.composite_cossim = sim_c / static_cast<double>(r.composite_count);
  }
  if (r.plain_count) {
    r.plain_loss = loss_p / static_cast<double>(r.plain_count);
    r.plain_cossim = sim_p / static_cast<double>(r.plain_count);
  }
  return r;
}

GroupedLossReport grouped_metrics(const MatrixD& similarity, double tau, const std::vector<bool>& composed_mask) {
  if (composed_mask.size() != static_cast<std::size_t>(similarity.rows()))
    throw std::invalid_argument("grouped_metrics: mask length does not match batch");
  return grouped_metrics(info_nce_backward(similarity, tau), similarity, composed_mask);
}

}  // namespace clipc
