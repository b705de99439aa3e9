#include "otv/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace otv {

namespace {
bool is_masked(double m) { return m <= kMaskSentinel * 0.5; }
}  // namespace

Matrix softmax_cols(const Matrix& logits, const Matrix& mask, double scale) {
  if (scale <= 0) throw std::invalid_argument("softmax_cols: scale must be positive");
  if (logits.rows() != mask.rows() || logits.cols() != mask.cols())
    throw std::invalid_argument("softmax_cols: mask shape mismatch");
  Matrix out(logits.rows(), logits.cols());
  for (int j = 0; j < logits.cols(); ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < logits.rows(); ++i)
      if (!is_masked(mask(i, j))) mx = std::max(mx, logits(i, j) / scale);
    if (!std::isfinite(mx))
      throw std::invalid_argument("softmax_cols: fully masked column");
    double z = 0.0;
    for (int i = 0; i < logits.rows(); ++i) {
      if (is_masked(mask(i, j))) {
        out(i, j) = 0.0;
      } else {
        out(i, j) = std::exp(logits(i, j) / scale - mx);
        z += out(i, j);
      }
    }
    for (int i = 0; i < logits.rows(); ++i) out(i, j) /= z;
  }
  return out;
}

Tape::NodeId Tape::push(Matrix v, std::function<void()> back) {
  nodes_.push_back(Node{std::move(v), Matrix(), std::move(back)});
  NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
  nodes_[id].grad = Matrix::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
  return id;
}

Tape::NodeId Tape::constant(Matrix v) { return push(std::move(v)); }

Tape::NodeId Tape::param(Param& p) {
  NodeId id = push(p.value);
  Param* pp = &p;
  nodes_[id].back = [this, id, pp] {
    if (pp->trainable) pp->grad += nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  NodeId id = push(val(a) + val(b));
  nodes_[id].back = [this, id, a, b] {
    nodes_[a].grad += nodes_[id].grad;
    nodes_[b].grad += nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  NodeId id = push(val(a) - val(b));
  nodes_[id].back = [this, id, a, b] {
    nodes_[a].grad += nodes_[id].grad;
    nodes_[b].grad -= nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  if (val(a).cols() != val(b).rows())
    throw std::invalid_argument("matmul: inner extents disagree");
  NodeId id = push(val(a) * val(b));
  nodes_[id].back = [this, id, a, b] {
    nodes_[a].grad.noalias() += nodes_[id].grad * val(b).transpose();
    nodes_[b].grad.noalias() += val(a).transpose() * nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::scale(NodeId a, double s) {
  NodeId id = push(val(a) * s);
  nodes_[id].back = [this, id, a, s] { nodes_[a].grad += nodes_[id].grad * s; };
  return id;
}

Tape::NodeId Tape::cmul(NodeId a, NodeId b) {
  NodeId id = push(val(a).cwiseProduct(val(b)));
  nodes_[id].back = [this, id, a, b] {
    nodes_[a].grad += nodes_[id].grad.cwiseProduct(val(b));
    nodes_[b].grad += nodes_[id].grad.cwiseProduct(val(a));
  };
  return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
  NodeId id = push(val(a).transpose());
  nodes_[id].back = [this, id, a] {
    nodes_[a].grad += nodes_[id].grad.transpose();
  };
  return id;
}

Tape::NodeId Tape::rows(NodeId a, int start, int n) {
  NodeId id = push(val(a).middleRows(start, n));
  nodes_[id].back = [this, id, a, start, n] {
    nodes_[a].grad.middleRows(start, n) += nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::vstack(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: empty");
  Eigen::Index total = 0;
  const Eigen::Index c = val(parts[0]).cols();
  for (NodeId p : parts) total += val(p).rows();
  Matrix v(total, c);
  Eigen::Index at = 0;
  for (NodeId p : parts) {
    v.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  NodeId id = push(std::move(v));
  std::vector<NodeId> ps = parts;
  nodes_[id].back = [this, id, ps] {
    Eigen::Index r = 0;
    for (NodeId p : ps) {
      nodes_[p].grad += nodes_[id].grad.middleRows(r, val(p).rows());
      r += val(p).rows();
    }
  };
  return id;
}

Tape::NodeId Tape::cols(NodeId a, int start, int n) {
  NodeId id = push(val(a).middleCols(start, n));
  nodes_[id].back = [this, id, a, start, n] {
    nodes_[a].grad.middleCols(start, n) += nodes_[id].grad;
  };
  return id;
}

Tape::NodeId Tape::broadcast_col(NodeId a, int n) {
  if (val(a).cols() != 1) throw std::invalid_argument("broadcast_col: not a column");
  NodeId id = push(val(a).replicate(1, n));
  nodes_[id].back = [this, id, a] {
    nodes_[a].grad += nodes_[id].grad.rowwise().sum();
  };
  return id;
}

Tape::NodeId Tape::silu(NodeId a) {
  const Matrix& x = val(a);
  Matrix sig = (1.0 / (1.0 + (-x.array()).exp())).matrix();
  NodeId id = push(x.cwiseProduct(sig));
  nodes_[id].back = [this, id, a, sig] {
    const Matrix& x2 = val(a);
    Matrix d = sig.array() * (1.0 + x2.array() * (1.0 - sig.array()));
    nodes_[a].grad += nodes_[id].grad.cwiseProduct(d);
  };
  return id;
}

Tape::NodeId Tape::sigmoid(NodeId a) {
  Matrix s = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
  NodeId id = push(s);
  nodes_[id].back = [this, id, a, s] {
    Matrix d = s.array() * (1.0 - s.array());
    nodes_[a].grad += nodes_[id].grad.cwiseProduct(d);
  };
  return id;
}

Tape::NodeId Tape::tanh(NodeId a) {
  Matrix t = val(a).array().tanh().matrix();
  NodeId id = push(t);
  nodes_[id].back = [this, id, a, t] {
    Matrix d = 1.0 - t.array().square();
    nodes_[a].grad += nodes_[id].grad.cwiseProduct(d);
  };
  return id;
}

Tape::NodeId Tape::softmax_cols(NodeId a, const Matrix& mask, double scale) {
  Matrix p = otv::softmax_cols(val(a), mask, scale);
  NodeId id = push(p);
  nodes_[id].back = [this, id, a, p, scale] {
    const Matrix& g = nodes_[id].grad;
    for (int j = 0; j < p.cols(); ++j) {
      double dot = p.col(j).dot(g.col(j));
      nodes_[a].grad.col(j) +=
          (p.col(j).array() * (g.col(j).array() - dot)).matrix() / scale;
    }
  };
  return id;
}

Tape::NodeId Tape::rmsnorm_cols(NodeId x, NodeId gain, double eps) {
  const Matrix& xv = val(x);
  const Eigen::Index d = xv.rows();
  Vector inv_rms(xv.cols());
  for (int j = 0; j < xv.cols(); ++j)
    inv_rms(j) = 1.0 / std::sqrt(xv.col(j).squaredNorm() / double(d) + eps);
  Matrix out(xv.rows(), xv.cols());
  for (int j = 0; j < xv.cols(); ++j)
    out.col(j) = xv.col(j).cwiseProduct(val(gain).col(0)) * inv_rms(j);
  NodeId id = push(std::move(out));
  nodes_[id].back = [this, id, x, gain, inv_rms, d] {
    const Matrix& xv2 = val(x);
    const Vector& gv = val(gain).col(0);
    const Matrix& g = nodes_[id].grad;
    for (int j = 0; j < xv2.cols(); ++j) {
      const double ir = inv_rms(j);
      Vector gg = g.col(j).cwiseProduct(gv);
      const double proj = gg.dot(xv2.col(j));
      nodes_[x].grad.col(j) +=
          gg * ir - xv2.col(j) * (proj * ir * ir * ir / double(d));
      nodes_[gain].grad.col(0) += g.col(j).cwiseProduct(xv2.col(j)) * ir;
    }
  };
  return id;
}

Tape::NodeId Tape::colwise_dot(NodeId k, NodeId q) {
  if (val(k).rows() != val(q).rows() || val(k).cols() != val(q).cols())
    throw std::invalid_argument("colwise_dot: shape mismatch");
  Matrix out(1, val(k).cols());
  for (int j = 0; j < val(k).cols(); ++j)
    out(0, j) = val(k).col(j).dot(val(q).col(j));
  NodeId id = push(std::move(out));
  nodes_[id].back = [this, id, k, q] {
    const Matrix& g = nodes_[id].grad;
    for (int j = 0; j < val(k).cols(); ++j) {
      nodes_[k].grad.col(j) += val(q).col(j) * g(0, j);
      nodes_[q].grad.col(j) += val(k).col(j) * g(0, j);
    }
  };
  return id;
}

Tape::NodeId Tape::scale_cols(NodeId v, NodeId p) {
  if (val(p).rows() != 1 || val(p).cols() != val(v).cols())
    throw std::invalid_argument("scale_cols: p must be 1 x cols(v)");
  Matrix out(val(v).rows(), val(v).cols());
  for (int j = 0; j < out.cols(); ++j) out.col(j) = val(v).col(j) * val(p)(0, j);
  NodeId id = push(std::move(out));
  nodes_[id].back = [this, id, v, p] {
    const Matrix& g = nodes_[id].grad;
    for (int j = 0; j < g.cols(); ++j) {
      nodes_[v].grad.col(j) += g.col(j) * val(p)(0, j);
      nodes_[p].grad(0, j) += g.col(j).dot(val(v).col(j));
    }
  };
  return id;
}

Tape::NodeId Tape::sum(NodeId a) {
  Matrix s(1, 1);
  s(0, 0) = val(a).sum();
  NodeId id = push(std::move(s));
  nodes_[id].back = [this, id, a] {
    nodes_[a].grad.array() += nodes_[id].grad(0, 0);
  };
  return id;
}

Tape::NodeId Tape::mse_masked(NodeId pred, const Matrix& target,
                              const std::vector<bool>& mask) {
  if (val(pred).rows() != 1 || target.rows() != 1 ||
      val(pred).cols() != target.cols() ||
      mask.size() != static_cast<size_t>(target.cols()))
    throw std::invalid_argument("mse_masked: shape mismatch");
  int n = 0;
  double acc = 0;
  for (int j = 0; j < target.cols(); ++j) {
    if (!mask[j]) continue;
    const double d = val(pred)(0, j) - target(0, j);
    acc += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mse_masked: all positions masked");
  Matrix s(1, 1);
  s(0, 0) = acc / n;
  NodeId id = push(std::move(s));
  nodes_[id].back = [this, id, pred, target, mask, n] {
    const double g = nodes_[id].grad(0, 0);
    for (int j = 0; j < target.cols(); ++j) {
      if (!mask[j]) continue;
      nodes_[pred].grad(0, j) +=
          g * 2.0 * (val(pred)(0, j) - target(0, j)) / n;
    }
  };
  return id;
}

Tape::NodeId Tape::cross_entropy_cols(NodeId logits,
                                      const std::vector<int>& targets,
                                      const std::vector<bool>& mask) {
  const Matrix& z = val(logits);
  if (targets.size() != static_cast<size_t>(z.cols()) ||
      mask.size() != targets.size())
    throw std::invalid_argument("cross_entropy_cols: length mismatch");
  int n = 0;
  double acc = 0;
  Matrix probs(z.rows(), z.cols());
  for (int j = 0; j < z.cols(); ++j) {
    const double mx = z.col(j).maxCoeff();
    Vector e = (z.col(j).array() - mx).exp();
    const double s = e.sum();
    probs.col(j) = e / s;
    if (mask[j]) {
      acc += -(z(targets[j], j) - mx - std::log(s));
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("cross_entropy_cols: empty mask");
  Matrix out(1, 1);
  out(0, 0) = acc / n;
  NodeId id = push(std::move(out));
  nodes_[id].back = [this, id, logits, probs, targets, mask, n] {
    const double g = nodes_[id].grad(0, 0);
    for (int j = 0; j < probs.cols(); ++j) {
      if (!mask[j]) continue;
      nodes_[logits].grad.col(j) += probs.col(j) * (g / n);
      nodes_[logits].grad(targets[j], j) -= g / n;
    }
  };
  return id;
}

void Tape::backward(NodeId loss) {
  if (val(loss).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  nodes_[loss].grad(0, 0) += 1.0;
  for (NodeId id = loss; id >= 0; --id)
    if (nodes_[id].back) nodes_[id].back();
}

double finite_difference_check(const std::function<double()>& loss_fn,
                               std::span<Param* const> params, double eps) {
  double worst = 0.0;
  for (Param* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + eps;
      const double up = loss_fn();
      p->value.data()[i] = saved - eps;
      const double dn = loss_fn();
      p->value.data()[i] = saved;
      const double numeric = (up - dn) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace otv
