#include "clipc/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace clipc {

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::parameter(Parameter& p) {
  return push(p.value.cast<float>(), true, [&p](Tape& t, int self) {
    p.grad += t.nodes_[static_cast<std::size_t>(self)].grad.cast<double>();
  });
}

Var Tape::parameter(const Parameter& p) { return push(p.value.cast<float>(), false, nullptr); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back({std::move(value), Matrix(), requires_grad, std::move(backward)});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_ref(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  for (const auto& [v, g] : seeds) {
    const auto& n = nodes_[static_cast<std::size_t>(v.id)];
    if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
      throw std::invalid_argument("backward: seed shape does not match value");
    grad_ref(v.id) += g;
  }
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

void Tape::backward(Var root, const Matrix& seed) {
  const std::pair<Var, Matrix> s{root, seed};
  backward(std::span(&s, 1));
}

namespace ops {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  check(t.value(a).cols() == t.value(b).rows(), "matmul: inner dimensions differ");
  Matrix y;
  y.noalias() = t.value(a) * t.value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(y), rg, [a, b](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    if (t.requires_grad(a)) t.grad_ref(a.id).noalias() += gy * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad_ref(b.id).noalias() += t.value(a).transpose() * gy;
  });
}

Var add(Tape& t, Var a, Var b) {
  check(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add: shape mismatch");
  Matrix y = t.value(a) + t.value(b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.push(std::move(y), rg, [a, b](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    if (t.requires_grad(a)) t.grad_ref(a.id) += gy;
    if (t.requires_grad(b)) t.grad_ref(b.id) += gy;
  });
}

Var add_row(Tape& t, Var x, Var bias) {
  check(t.value(bias).rows() == 1 && t.value(bias).cols() == t.value(x).cols(), "add_row: bias shape mismatch");
  Matrix y = t.value(x).rowwise() + t.value(bias).row(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(bias);
  return t.push(std::move(y), rg, [x, bias](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    if (t.requires_grad(x)) t.grad_ref(x.id) += gy;
    if (t.requires_grad(bias)) t.grad_ref(bias.id) += gy.colwise().sum();
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, float eps) {
  const Matrix& xv = t.value(x);
  const Eigen::Index n = xv.cols();
  check(t.value(gain).cols() == n && t.value(bias).cols() == n, "layer_norm: parameter shape mismatch");
  auto xhat = std::make_shared<Matrix>(xv.rows(), n);
  auto rstd = std::make_shared<Eigen::VectorXf>(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const float mean = xv.row(r).mean();
    const float var = (xv.row(r).array() - mean).square().mean();
    (*rstd)(r) = 1.0f / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mean) * (*rstd)(r);
  }
  Matrix y = (xhat->array().rowwise() * t.value(gain).row(0).array()).matrix();
  y.rowwise() += t.value(bias).row(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.push(std::move(y), rg, [x, gain, bias, xhat, rstd](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    if (t.requires_grad(gain)) t.grad_ref(gain.id) += (gy.array() * xhat->array()).colwise().sum().matrix();
    if (t.requires_grad(bias)) t.grad_ref(bias.id) += gy.colwise().sum();
    if (t.requires_grad(x)) {
      const Matrix gx_hat = (gy.array().rowwise() * t.value(gain).row(0).array()).matrix();
      Matrix& gx = t.grad_ref(x.id);
      const auto n = static_cast<float>(gx_hat.cols());
      for (Eigen::Index r = 0; r < gx_hat.rows(); ++r) {
        const float m1 = gx_hat.row(r).sum() / n;
        const float m2 = gx_hat.row(r).dot(xhat->row(r)) / n;
        gx.row(r).array() += (*rstd)(r) * (gx_hat.row(r).array() - m1 - xhat->row(r).array() * m2);
      }
    }
  });
}

Var quick_gelu(Tape& t, Var x) {
  auto sig = std::make_shared<Matrix>((1.0f / (1.0f + (-1.702f * t.value(x).array()).exp())).matrix());
  Matrix y = (t.value(x).array() * sig->array()).matrix();
  return t.push(std::move(y), t.requires_grad(x), [x, sig](Tape& t, int self) {
    const auto& xv = t.value(x).array();
    const auto& s = sig->array();
    t.grad_ref(x.id).array() += t.grad(Var{self}).array() * (s + 1.702f * xv * s * (1.0f - s));
  });
}

Var attention(Tape& t, Var qkv, int batch, int seq, int heads, std::span<const int> key_lengths, bool causal) {
  const Matrix& in = t.value(qkv);
  check(in.rows() == static_cast<Eigen::Index>(batch) * seq, "attention: row count != batch * seq");
  check(in.cols() % 3 == 0, "attention: qkv width must be divisible by 3");
  const int width = static_cast<int>(in.cols() / 3);
  check(heads > 0 && width % heads == 0, "attention: width must be divisible by heads");
  check(static_cast<int>(key_lengths.size()) == batch, "attention: key_lengths size != batch");
  const int dh = width / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch) * heads);
  Matrix out(in.rows(), width);
  const float neg_inf = -std::numeric_limits<float>::infinity();
  for (int b = 0; b < batch; ++b) {
    const int len = key_lengths[static_cast<std::size_t>(b)];
    check(len >= 1 && len <= seq, "attention: key length out of range");
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(static_cast<Eigen::Index>(b) * seq, h * dh, seq, dh);
      const auto k = in.block(static_cast<Eigen::Index>(b) * seq, width + h * dh, seq, dh);
      const auto v = in.block(static_cast<Eigen::Index>(b) * seq, 2 * width + h * dh, seq, dh);
      Matrix& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
      p.noalias() = (q * k.transpose()) * scale;
      for (int i = 0; i < seq; ++i) {
        const int limit = causal ? std::min(len, i + 1) : len;
        for (int j = limit; j < seq; ++j) p(i, j) = neg_inf;
        const float mx = p.row(i).head(limit).maxCoeff();
        p.row(i).head(limit) = (p.row(i).head(limit).array() - mx).exp();
        p.row(i).head(limit) /= p.row(i).head(limit).sum();
        p.row(i).tail(seq - limit).setZero();
      }
      out.block(static_cast<Eigen::Index>(b) * seq, h * dh, seq, dh).noalias() = p * v;
    }
  }
  return t.push(std::move(out), t.requires_grad(qkv), [qkv, batch, seq, heads, width, dh, scale, probs](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    const Matrix& in = t.value(qkv);
    Matrix& g = t.grad_ref(qkv.id);
    Matrix dp, ds;
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * seq;
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
        const auto q = in.block(r0, h * dh, seq, dh);
        const auto k = in.block(r0, width + h * dh, seq, dh);
        const auto v = in.block(r0, 2 * width + h * dh, seq, dh);
        const auto go = gy.block(r0, h * dh, seq, dh);
        dp.noalias() = go * v.transpose();
        g.block(r0, 2 * width + h * dh, seq, dh).noalias() += p.transpose() * go;
        const Eigen::VectorXf rowdot = (dp.array() * p.array()).rowwise().sum();
        ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix();
        g.block(r0, h * dh, seq, dh).noalias() += (ds * k) * scale;
        g.block(r0, width + h * dh, seq, dh).noalias() += (ds.transpose() * q) * scale;
      }
    }
  });
}

Var gather_rows(Tape& t, Var x, std::vector<int> rows) {
  const Matrix& xv = t.value(x);
  Matrix y(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < xv.rows(), "gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(i)) = xv.row(rows[i]);
  }
  return t.push(std::move(y), t.requires_grad(x), [x, rows = std::move(rows)](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    Matrix& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < rows.size(); ++i) gx.row(rows[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

Var embedding(Tape& t, Var table, std::vector<int> ids) {
  const Matrix& tv = t.value(table);
  Matrix y(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < tv.rows(), "embedding: token id out of range");
    y.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  return t.push(std::move(y), t.requires_grad(table), [table, ids = std::move(ids)](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    Matrix& gt = t.grad_ref(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

Var add_positional(Tape& t, Var x, Var pos, int seq) {
  const Matrix& xv = t.value(x);
  const Matrix& pv = t.value(pos);
  check(pv.rows() == seq && pv.cols() == xv.cols() && xv.rows() % seq == 0, "add_positional: shape mismatch");
  Matrix y = xv;
  const Eigen::Index blocks = xv.rows() / seq;
  for (Eigen::Index b = 0; b < blocks; ++b) y.middleRows(b * seq, seq) += pv;
  const bool rg = t.requires_grad(x) || t.requires_grad(pos);
  return t.push(std::move(y), rg, [x, pos, seq, blocks](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    if (t.requires_grad(x)) t.grad_ref(x.id) += gy;
    if (t.requires_grad(pos)) {
      Matrix& gp = t.grad_ref(pos.id);
      for (Eigen::Index b = 0; b < blocks; ++b) gp += gy.middleRows(b * seq, seq);
    }
  });
}

Var prepend_token(Tape& t, Var x, Var token, int batch, int seq) {
  const Matrix& xv = t.value(x);
  check(xv.rows() == static_cast<Eigen::Index>(batch) * seq, "prepend_token: row count mismatch");
  check(t.value(token).rows() == 1 && t.value(token).cols() == xv.cols(), "prepend_token: token shape mismatch");
  Matrix y(static_cast<Eigen::Index>(batch) * (seq + 1), xv.cols());
  for (int b = 0; b < batch; ++b) {
    y.row(static_cast<Eigen::Index>(b) * (seq + 1)) = t.value(token).row(0);
    y.middleRows(static_cast<Eigen::Index>(b) * (seq + 1) + 1, seq) = xv.middleRows(static_cast<Eigen::Index>(b) * seq, seq);
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(token);
  return t.push(std::move(y), rg, [x, token, batch, seq](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * (seq + 1);
      if (t.requires_grad(token)) t.grad_ref(token.id).row(0) += gy.row(r);
      if (t.requires_grad(x)) t.grad_ref(x.id).middleRows(static_cast<Eigen::Index>(b) * seq, seq) += gy.middleRows(r + 1, seq);
    }
  });
}

Var patchify(Tape& t, Var images, int size, int patch) {
  const Matrix& iv = t.value(images);
  check(size % patch == 0, "patchify: image size not divisible by patch size");
  check(iv.cols() == 3L * size * size, "patchify: image row width != 3 * S * S");
  const int grid = size / patch;
  const int per_image = grid * grid;
  const int pdim = 3 * patch * patch;
  const Eigen::Index n = iv.rows();
  // index[r * pdim + c] = column of the source pixel for patch row r (within an image).
  auto index = std::make_shared<std::vector<int>>(static_cast<std::size_t>(per_image) * pdim);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx)
      for (int c = 0; c < 3; ++c)
        for (int py = 0; py < patch; ++py)
          for (int px = 0; px < patch; ++px) {
            const int r = gy * grid + gx;
            const int col = (c * patch + py) * patch + px;
            (*index)[static_cast<std::size_t>(r) * pdim + col] = c * size * size + (gy * patch + py) * size + gx * patch + px;
          }
  Matrix y(n * per_image, pdim);
  for (Eigen::Index b = 0; b < n; ++b)
    for (int r = 0; r < per_image; ++r)
      for (int col = 0; col < pdim; ++col)
        y(b * per_image + r, col) = iv(b, (*index)[static_cast<std::size_t>(r) * pdim + col]);
  return t.push(std::move(y), t.requires_grad(images), [images, per_image, pdim, index](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    Matrix& gi = t.grad_ref(images.id);
    for (Eigen::Index b = 0; b < gi.rows(); ++b)
      for (int r = 0; r < per_image; ++r)
        for (int col = 0; col < pdim; ++col)
          gi(b, (*index)[static_cast<std::size_t>(r) * pdim + col]) += gy(b * per_image + r, col);
  });
}

Var l2_normalize_rows(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  auto inv = std::make_shared<Eigen::VectorXf>(xv.rows());
  Matrix y(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const float norm = xv.row(r).norm();
    check(norm != 0.0f, "l2_normalize_rows: zero row");
    (*inv)(r) = 1.0f / norm;
    y.row(r) = xv.row(r) * (*inv)(r);
  }
  return t.push(std::move(y), t.requires_grad(x), [x, inv](Tape& t, int self) {
    const Matrix& gy = t.grad(Var{self});
    const Matrix& y = t.value(Var{self});
    Matrix& gx = t.grad_ref(x.id);
    for (Eigen::Index r = 0; r < gy.rows(); ++r) {
      const float d = gy.row(r).dot(y.row(r));
      gx.row(r) += (gy.row(r) - y.row(r) * d) * (*inv)(r);
    }
  });
}

}  // namespace ops

}  // namespace clipc
