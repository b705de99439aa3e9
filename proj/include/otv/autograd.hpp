#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace otv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Additive mask value standing in for -inf. softmax_cols zeroes these
// entries exactly after the exponentiation, so no NaN can leak through.
inline constexpr double kMaskSentinel = -1e30;

// A named weight block. Gradient accumulation is additive; call
// zero_grad() between optimizer steps. Non-trainable parameters never
// receive gradient.
struct Param {
  Matrix value;
  Matrix grad;
  bool trainable = true;
  std::string name;

  Param() = default;
  Param(Matrix v, std::string n, bool train = true)
      : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        trainable(train), name(std::move(n)) {}

  void zero_grad() { grad.setZero(); }
};

// Column-wise masked softmax on a plain matrix (no recording).
// `mask` is additive; entries at kMaskSentinel (or below half of it)
// come out exactly zero. Throws if a column is fully masked.
Matrix softmax_cols(const Matrix& logits, const Matrix& mask, double scale);

// Reverse-mode tape over dense matrices. Node values are computed
// eagerly; backward() replays the recorded closures in reverse.
class Tape {
 public:
  using NodeId = int;

  NodeId constant(Matrix v);
  NodeId param(Param& p);

  const Matrix& val(NodeId id) const { return nodes_[id].value; }
  Matrix& grad(NodeId id) { return nodes_[id].grad; }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId cmul(NodeId a, NodeId b);  // elementwise
  NodeId transpose(NodeId a);
  NodeId rows(NodeId a, int start, int n);
  NodeId vstack(const std::vector<NodeId>& parts);
  NodeId cols(NodeId a, int start, int n);
  // Repeat a column vector across n columns.
  NodeId broadcast_col(NodeId a, int n);
  NodeId silu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  // Column-wise softmax of (a + mask) / scale; sentinel entries exactly 0.
  NodeId softmax_cols(NodeId a, const Matrix& mask, double scale);
  // RMS normalization per column with a learned per-row gain (D x 1).
  NodeId rmsnorm_cols(NodeId x, NodeId gain, double eps = 1e-6);
  // Row vector of per-column dot products: out(0,j) = k.col(j) . q.col(j).
  NodeId colwise_dot(NodeId k, NodeId q);
  // v * diag(p) where p is a 1 x n row vector.
  NodeId scale_cols(NodeId v, NodeId p);
  NodeId sum(NodeId a);
  // Mean of squared error over the columns where mask is true.
  // pred and target are 1 x n. Throws if no column is unmasked.
  NodeId mse_masked(NodeId pred, const Matrix& target,
                    const std::vector<bool>& mask);
  // Mean negative log-likelihood of targets under column-wise softmax of
  // the logits, restricted to columns where mask is true.
  NodeId cross_entropy_cols(NodeId logits, const std::vector<int>& targets,
                            const std::vector<bool>& mask);

  // Seeds d(loss)/d(loss) = 1 and propagates. Trainable parameter grads
  // accumulate (additive across backward calls).
  void backward(NodeId loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;  // empty for leaves
  };
  NodeId push(Matrix v, std::function<void()> back = {});
  std::vector<Node> nodes_;
};

// Central-difference check of already-accumulated gradients.
// Call pattern: populate grads via backward(), then pass a pure
// re-evaluation of the loss. Returns the worst relative error with
// denominator max(|analytic|, |numeric|, 1e-8). loss_fn must be
// deterministic.
double finite_difference_check(const std::function<double()>& loss_fn,
                               std::span<Param* const> params, double eps);

}  // namespace otv
