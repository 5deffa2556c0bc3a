#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clipc/tensor.hpp"

namespace clipc {

/// Trainable tensor. Values are kept in double precision (master copy); the
/// forward pass runs in float.
struct Parameter {
  std::string name;
  MatrixD value;
  MatrixD grad;
  bool decay = true;  // false for temperature and normalization parameters

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, bool wd = true)
      : name(std::move(n)), value(MatrixD::Zero(rows, cols)), grad(MatrixD::Zero(rows, cols)), decay(wd) {}
};

struct Var {
  int id = -1;
};

/// Reverse-mode tape over row-major float matrices. Nodes are appended in
/// evaluation order and back-propagated in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Matrix value);
  /// A leaf whose gradient is retained and readable through `grad()`.
  Var input(Matrix value);
  /// Leaf bound to a parameter; backward accumulates into `p.grad`.
  Var parameter(Parameter& p);
  /// Frozen parameter read (no gradient).
  Var parameter(const Parameter& p);

  Var push(Matrix value, bool requires_grad, Backward backward);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  /// Gradient of `v`; empty when nothing flowed into it.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }

  /// Zero-initialized on first access.
  Matrix& grad_ref(int id);

  void backward(std::span<const std::pair<Var, Matrix>> seeds);
  void backward(Var root, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// x + broadcast row vector `bias` (1 x n).
Var add_row(Tape& t, Var x, Var bias);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, float eps = 1e-5f);
/// x * sigmoid(1.702 x)
Var quick_gelu(Tape& t, Var x);

/// Multi-head self-attention over packed sequences.
/// `qkv` is (batch * seq) x (3 * width), laid out [q | k | v]. Keys at
/// positions >= key_lengths[b] are masked; `causal` additionally masks
/// keys after the query. Output is (batch * seq) x width.
Var attention(Tape& t, Var qkv, int batch, int seq, int heads, std::span<const int> key_lengths, bool causal);

/// Selects one row per entry of `rows`.
Var gather_rows(Tape& t, Var x, std::vector<int> rows);
/// Rows of `table` indexed by `ids`.
Var embedding(Tape& t, Var table, std::vector<int> ids);
/// x[b * seq + s] += pos[s].
Var add_positional(Tape& t, Var x, Var pos, int seq);
/// Inserts `token` (1 x width) before each length-`seq` block of x.
Var prepend_token(Tape& t, Var x, Var token, int batch, int seq);
/// Images (batch x 3*S*S, CHW) to patch rows (batch*(S/p)^2 x 3*p*p).
Var patchify(Tape& t, Var images, int size, int patch);
Var l2_normalize_rows(Tape& t, Var x);

}  // namespace ops

}  // namespace clipc
