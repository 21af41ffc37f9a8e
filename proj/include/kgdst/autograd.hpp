#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgdst {

using Matrix = Eigen::MatrixXd;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reverse-mode autodiff over a tape of matrix-valued nodes. A fresh tape is
// built per forward pass; backward() runs the recorded closures in reverse
// creation order. Parameter leaves accumulate their gradients into external
// sinks so multiple tapes (or multiple uses within one tape) sum naturally.
class Tape {
 public:
  struct ValueRef {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  // Constant leaf; no gradient flows out of it.
  ValueRef input(Matrix v, const char* name = "input");
  // Parameter leaf; backward() adds the node gradient into *grad_sink
  // (which must already have v's shape, or be resized by the caller).
  ValueRef param(const Matrix& v, Matrix* grad_sink, const char* name = "param");
  // Re-enter an existing node's value as a constant (stop-gradient).
  ValueRef detach(ValueRef x);

  const Matrix& value(ValueRef x) const { return nodes_[x.idx].value; }
  const Matrix& grad(ValueRef x) const { return nodes_[x.idx].grad; }
  std::size_t size() const { return nodes_.size(); }

  // --- ops ---
  ValueRef matmul(ValueRef a, ValueRef b);          // A * B
  ValueRef matmul_nt(ValueRef a, ValueRef b);       // A * B^T
  ValueRef add(ValueRef a, ValueRef b);             // elementwise, same shape
  ValueRef sub(ValueRef a, ValueRef b);
  ValueRef mul(ValueRef a, ValueRef b);             // elementwise (Hadamard)
  ValueRef scale(ValueRef a, double c);
  ValueRef add_row_broadcast(ValueRef a, ValueRef row);  // row added to each row of a
  ValueRef rows(ValueRef a, std::vector<int> indices);   // gather rows
  ValueRef slice_cols(ValueRef a, int start, int count);
  ValueRef reshape(ValueRef a, int rows, int cols);  // column-major order
  ValueRef concat_cols(const std::vector<ValueRef>& parts);
  ValueRef concat_rows(const std::vector<ValueRef>& parts);
  ValueRef softmax_rows(ValueRef a);                // row-wise softmax
  ValueRef layer_norm_rows(ValueRef a, ValueRef gain, ValueRef bias,
                           double eps = 1e-5);
  ValueRef gelu(ValueRef a);
  ValueRef sigmoid(ValueRef a);
  ValueRef dot(ValueRef a, ValueRef b);             // 1xN rows -> 1x1 scalar
  ValueRef sum(ValueRef a);                         // -> 1x1 scalar
  // Mean token negative log-likelihood; logits T x V, one target id per row.
  ValueRef cross_entropy_mean(ValueRef logits, const std::vector<int>& targets);
  // Sum over i of BCE(sigmoid(score_i), label_i); scores n x 1.
  ValueRef bce_with_logits(ValueRef scores, const std::vector<int>& labels);

  double scalar(ValueRef x) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
  void backward(ValueRef loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backprop;  // empty for leaves/constants
    const char* name = "";
  };

  ValueRef push(Matrix value, const char* name);
  void set_backprop(ValueRef x, std::function<void()> fn);
  Matrix& grad_mut(ValueRef x) { return nodes_[x.idx].grad; }
  void check_finite(ValueRef x) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Matrix*>> param_sinks_;
  bool grad_enabled_;
};

}  // namespace kgdst
