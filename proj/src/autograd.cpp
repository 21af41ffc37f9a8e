#include "kgdst/autograd.hpp"

#include <cmath>
#include <utility>

namespace kgdst {

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Tape::ValueRef Tape::push(Matrix value, const char* name) {
  Node node;
  node.value = std::move(value);
  node.name = name;
  if (grad_enabled_) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  }
  nodes_.push_back(std::move(node));
  ValueRef ref{static_cast<int>(nodes_.size()) - 1};
  check_finite(ref);
  return ref;
}

void Tape::check_finite(ValueRef x) const {
  if (!nodes_[x.idx].value.allFinite()) {
    throw NumericError(std::string("non-finite value in op '") +
                       nodes_[x.idx].name + "'");
  }
}

void Tape::set_backprop(ValueRef x, std::function<void()> fn) {
  if (grad_enabled_) nodes_[x.idx].backprop = std::move(fn);
}

Tape::ValueRef Tape::input(Matrix v, const char* name) {
  return push(std::move(v), name);
}

Tape::ValueRef Tape::param(const Matrix& v, Matrix* grad_sink, const char* name) {
  ValueRef ref = push(v, name);
  if (grad_enabled_ && grad_sink != nullptr) {
    param_sinks_.emplace_back(ref.idx, grad_sink);
  }
  return ref;
}

Tape::ValueRef Tape::detach(ValueRef x) {
  return push(nodes_[x.idx].value, "detach");
}

Tape::ValueRef Tape::matmul(ValueRef a, ValueRef b) {
  ValueRef out = push(nodes_[a.idx].value * nodes_[b.idx].value, "matmul");
  set_backprop(out, [this, a, b, out] {
    const Matrix& g = nodes_[out.idx].grad;
    grad_mut(a).noalias() += g * nodes_[b.idx].value.transpose();
    grad_mut(b).noalias() += nodes_[a.idx].value.transpose() * g;
  });
  return out;
}

Tape::ValueRef Tape::matmul_nt(ValueRef a, ValueRef b) {
  ValueRef out =
      push(nodes_[a.idx].value * nodes_[b.idx].value.transpose(), "matmul_nt");
  set_backprop(out, [this, a, b, out] {
    const Matrix& g = nodes_[out.idx].grad;
    grad_mut(a).noalias() += g * nodes_[b.idx].value;
    grad_mut(b).noalias() += g.transpose() * nodes_[a.idx].value;
  });
  return out;
}

Tape::ValueRef Tape::add(ValueRef a, ValueRef b) {
  ValueRef out = push(nodes_[a.idx].value + nodes_[b.idx].value, "add");
  set_backprop(out, [this, a, b, out] {
    grad_mut(a) += nodes_[out.idx].grad;
    grad_mut(b) += nodes_[out.idx].grad;
  });
  return out;
}

Tape::ValueRef Tape::sub(ValueRef a, ValueRef b) {
  ValueRef out = push(nodes_[a.idx].value - nodes_[b.idx].value, "sub");
  set_backprop(out, [this, a, b, out] {
    grad_mut(a) += nodes_[out.idx].grad;
    grad_mut(b) -= nodes_[out.idx].grad;
  });
  return out;
}

Tape::ValueRef Tape::mul(ValueRef a, ValueRef b) {
  ValueRef out = push(
      nodes_[a.idx].value.cwiseProduct(nodes_[b.idx].value), "mul");
  set_backprop(out, [this, a, b, out] {
    const Matrix& g = nodes_[out.idx].grad;
    grad_mut(a) += g.cwiseProduct(nodes_[b.idx].value);
    grad_mut(b) += g.cwiseProduct(nodes_[a.idx].value);
  });
  return out;
}

Tape::ValueRef Tape::scale(ValueRef a, double c) {
  ValueRef out = push(nodes_[a.idx].value * c, "scale");
  set_backprop(out, [this, a, c, out] {
    grad_mut(a) += nodes_[out.idx].grad * c;
  });
  return out;
}

Tape::ValueRef Tape::add_row_broadcast(ValueRef a, ValueRef row) {
  Matrix v = nodes_[a.idx].value;
  v.rowwise() += Eigen::RowVectorXd(nodes_[row.idx].value.row(0));
  ValueRef out = push(std::move(v), "add_row_broadcast");
  set_backprop(out, [this, a, row, out] {
    const Matrix& g = nodes_[out.idx].grad;
    grad_mut(a) += g;
    grad_mut(row) += g.colwise().sum();
  });
  return out;
}

Tape::ValueRef Tape::rows(ValueRef a, std::vector<int> indices) {
  const Matrix& src = nodes_[a.idx].value;
  Matrix v(static_cast<Eigen::Index>(indices.size()), src.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    v.row(static_cast<Eigen::Index>(i)) = src.row(indices[i]);
  }
  ValueRef out = push(std::move(v), "rows");
  set_backprop(out, [this, a, out, idx = std::move(indices)] {
    const Matrix& g = nodes_[out.idx].grad;
    Matrix& ga = grad_mut(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
  return out;
}

Tape::ValueRef Tape::slice_cols(ValueRef a, int start, int count) {
  ValueRef out = push(
      nodes_[a.idx].value.middleCols(start, count), "slice_cols");
  set_backprop(out, [this, a, start, count, out] {
    grad_mut(a).middleCols(start, count) += nodes_[out.idx].grad;
  });
  return out;
}

Tape::ValueRef Tape::reshape(ValueRef a, int r, int c) {
  const Matrix& src = nodes_[a.idx].value;
  if (src.size() != static_cast<Eigen::Index>(r) * c) {
    throw NumericError("reshape: element count mismatch");
  }
  Matrix v = Eigen::Map<const Matrix>(src.data(), r, c);
  ValueRef out = push(std::move(v), "reshape");
  set_backprop(out, [this, a, out] {
    const Matrix& g = nodes_[out.idx].grad;
    Matrix& ga = grad_mut(a);
    ga += Eigen::Map<const Matrix>(g.data(), ga.rows(), ga.cols());
  });
  return out;
}

Tape::ValueRef Tape::concat_cols(const std::vector<ValueRef>& parts) {
  Eigen::Index rows = nodes_[parts[0].idx].value.rows();
  Eigen::Index cols = 0;
  for (ValueRef p : parts) cols += nodes_[p.idx].value.cols();
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (ValueRef p : parts) {
    const Matrix& m = nodes_[p.idx].value;
    v.middleCols(at, m.cols()) = m;
    at += m.cols();
  }
  ValueRef out = push(std::move(v), "concat_cols");
  set_backprop(out, [this, parts, out] {
    const Matrix& g = nodes_[out.idx].grad;
    Eigen::Index at = 0;
    for (ValueRef p : parts) {
      const Eigen::Index c = nodes_[p.idx].value.cols();
      grad_mut(p) += g.middleCols(at, c);
      at += c;
    }
  });
  return out;
}

Tape::ValueRef Tape::concat_rows(const std::vector<ValueRef>& parts) {
  Eigen::Index cols = nodes_[parts[0].idx].value.cols();
  Eigen::Index rows = 0;
  for (ValueRef p : parts) rows += nodes_[p.idx].value.rows();
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (ValueRef p : parts) {
    const Matrix& m = nodes_[p.idx].value;
    v.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  ValueRef out = push(std::move(v), "concat_rows");
  set_backprop(out, [this, parts, out] {
    const Matrix& g = nodes_[out.idx].grad;
    Eigen::Index at = 0;
    for (ValueRef p : parts) {
      const Eigen::Index r = nodes_[p.idx].value.rows();
      grad_mut(p) += g.middleRows(at, r);
      at += r;
    }
  });
  return out;
}

Tape::ValueRef Tape::softmax_rows(ValueRef a) {
  Matrix v = nodes_[a.idx].value;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  ValueRef out = push(std::move(v), "softmax_rows");
  set_backprop(out, [this, a, out] {
    const Matrix& y = nodes_[out.idx].value;
    const Matrix& g = nodes_[out.idx].grad;
    Matrix& ga = grad_mut(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).cwiseProduct(y.row(r)).sum();
      ga.row(r) += (g.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
    }
  });
  return out;
}

Tape::ValueRef Tape::layer_norm_rows(ValueRef a, ValueRef gain, ValueRef bias,
                                     double eps) {
  const Matrix& x = nodes_[a.idx].value;
  const Eigen::Index n = x.cols();
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Matrix v = xhat;
  const Eigen::RowVectorXd g_row = nodes_[gain.idx].value.row(0);
  const Eigen::RowVectorXd b_row = nodes_[bias.idx].value.row(0);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    v.row(r) = v.row(r).cwiseProduct(g_row) + b_row;
  }
  ValueRef out = push(std::move(v), "layer_norm");
  set_backprop(out, [this, a, gain, bias, out, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)] {
    const Matrix& g = nodes_[out.idx].grad;
    const Eigen::RowVectorXd gain_row = nodes_[gain.idx].value.row(0);
    const Eigen::Index n = g.cols();
    Matrix& ga = grad_mut(a);
    Matrix& ggain = grad_mut(gain);
    Matrix& gbias = grad_mut(bias);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gain_row);
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(r)).mean();
      ga.row(r) += inv_std(r) *
                   (dxhat.array() - mean_dxhat -
                    xhat.row(r).array() * mean_dxhat_xhat)
                       .matrix();
      ggain.row(0) += g.row(r).cwiseProduct(xhat.row(r));
      gbias.row(0) += g.row(r);
    }
    (void)n;
  });
  return out;
}

Tape::ValueRef Tape::gelu(ValueRef a) {
  const Matrix& x = nodes_[a.idx].value;
  Matrix t = (kGeluC * (x.array() + kGeluA * x.array().cube())).tanh();
  Matrix v = 0.5 * x.array() * (1.0 + t.array());
  ValueRef out = push(std::move(v), "gelu");
  set_backprop(out, [this, a, out, t = std::move(t)] {
    const Matrix& x = nodes_[a.idx].value;
    const Matrix& g = nodes_[out.idx].grad;
    Eigen::ArrayXXd sech2 = 1.0 - t.array().square();
    Eigen::ArrayXXd du = kGeluC * (1.0 + 3.0 * kGeluA * x.array().square());
    Eigen::ArrayXXd dydx =
        0.5 * (1.0 + t.array()) + 0.5 * x.array() * sech2 * du;
    grad_mut(a) += (g.array() * dydx).matrix();
  });
  return out;
}

Tape::ValueRef Tape::sigmoid(ValueRef a) {
  Matrix v = nodes_[a.idx].value.unaryExpr([](double x) { return logistic(x); });
  ValueRef out = push(std::move(v), "sigmoid");
  set_backprop(out, [this, a, out] {
    const Matrix& y = nodes_[out.idx].value;
    grad_mut(a) += nodes_[out.idx]
                       .grad.cwiseProduct(y)
                       .cwiseProduct((1.0 - y.array()).matrix());
  });
  return out;
}

Tape::ValueRef Tape::dot(ValueRef a, ValueRef b) {
  Matrix v(1, 1);
  v(0, 0) = nodes_[a.idx].value.cwiseProduct(nodes_[b.idx].value).sum();
  ValueRef out = push(std::move(v), "dot");
  set_backprop(out, [this, a, b, out] {
    const double g = nodes_[out.idx].grad(0, 0);
    grad_mut(a) += g * nodes_[b.idx].value;
    grad_mut(b) += g * nodes_[a.idx].value;
  });
  return out;
}

Tape::ValueRef Tape::sum(ValueRef a) {
  Matrix v(1, 1);
  v(0, 0) = nodes_[a.idx].value.sum();
  ValueRef out = push(std::move(v), "sum");
  set_backprop(out, [this, a, out] {
    grad_mut(a).array() += nodes_[out.idx].grad(0, 0);
  });
  return out;
}

Tape::ValueRef Tape::cross_entropy_mean(ValueRef logits,
                                        const std::vector<int>& targets) {
  const Matrix& z = nodes_[logits.idx].value;
  if (targets.empty() || static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw NumericError("cross_entropy_mean: target length mismatch");
  }
  const double inv_t = 1.0 / static_cast<double>(targets.size());
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    Eigen::ArrayXd e = (z.row(r).array() - m).exp();
    const double denom = e.sum();
    probs.row(r) = (e / denom).matrix();
    loss += std::log(denom) + m - z(r, targets[static_cast<std::size_t>(r)]);
  }
  Matrix v(1, 1);
  v(0, 0) = loss * inv_t;
  ValueRef out = push(std::move(v), "cross_entropy_mean");
  set_backprop(out, [this, logits, out, targets, inv_t,
                     probs = std::move(probs)] {
    const double g = nodes_[out.idx].grad(0, 0);
    Matrix d = probs;
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      d(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
    }
    grad_mut(logits) += (g * inv_t) * d;
  });
  return out;
}

Tape::ValueRef Tape::bce_with_logits(ValueRef scores,
                                     const std::vector<int>& labels) {
  const Matrix& s = nodes_[scores.idx].value;
  if (static_cast<Eigen::Index>(labels.size()) != s.rows() || s.cols() != 1) {
    throw NumericError("bce_with_logits: scores must be n x 1 matching labels");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    loss += softplus(s(i, 0)) - static_cast<double>(labels[static_cast<std::size_t>(i)]) * s(i, 0);
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  ValueRef out = push(std::move(v), "bce_with_logits");
  set_backprop(out, [this, scores, out, labels] {
    const double g = nodes_[out.idx].grad(0, 0);
    Matrix& gs = grad_mut(scores);
    const Matrix& s = nodes_[scores.idx].value;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      gs(i, 0) += g * (logistic(s(i, 0)) -
                       static_cast<double>(labels[static_cast<std::size_t>(i)]));
    }
  });
  return out;
}

double Tape::scalar(ValueRef x) const {
  const Matrix& v = nodes_[x.idx].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw NumericError("scalar() on non-scalar node");
  }
  return v(0, 0);
}

void Tape::backward(ValueRef loss) {
  if (!grad_enabled_) {
    throw NumericError("backward() on a grad-disabled tape");
  }
  const Matrix& v = nodes_[loss.idx].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw NumericError("backward() requires a scalar loss");
  }
  nodes_[loss.idx].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].backprop) nodes_[i].backprop();
    if (!nodes_[i].grad.allFinite()) {
      throw NumericError(std::string("non-finite gradient in op '") +
                         nodes_[i].name + "'");
    }
  }
  for (auto& [idx, sink] : param_sinks_) {
    *sink += nodes_[idx].grad;
  }
}

}  // namespace kgdst
