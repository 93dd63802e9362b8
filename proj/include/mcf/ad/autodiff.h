#pragma once
// Minimal reverse-mode differentiation over row-major matrices. Each op
// records its parents and a backward closure; backward() walks the graph in
// reverse topological order.
#include <functional>
#include <mcf/core/linalg.h>
#include <memory>
#include <vector>

namespace mcf::ad {

struct Node {
  Mat value;
  Mat grad; // empty until a gradient arrives
  bool requires_grad{false};
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;

  void accumulate(const Mat &g);
  void zero_grad() { grad.resize(0, 0); }
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : m_node(std::move(node)) {}

  const Mat &value() const { return m_node->value; }
  Mat &mutable_value() { return m_node->value; }
  /// Gradient with the value's shape (zeros if none accumulated).
  Mat grad() const;
  bool requires_grad() const { return m_node && m_node->requires_grad; }
  Eigen::Index rows() const { return m_node->value.rows(); }
  Eigen::Index cols() const { return m_node->value.cols(); }
  double item() const { return m_node->value(0, 0); }
  const NodePtr &node() const { return m_node; }
  bool defined() const { return static_cast<bool>(m_node); }

private:
  NodePtr m_node;
};

Tensor constant(Mat value);
Tensor parameter(Mat value);

/// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
void backward(const Tensor &root);

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool m_previous;
};
bool grad_enabled();

Tensor matmul(const Tensor &a, const Tensor &b);
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor add_row(const Tensor &a, const Tensor &row); // broadcast 1 x c
Tensor scale(const Tensor &a, double s);
Tensor silu(const Tensor &a);
Tensor sum(const Tensor &a);
Tensor concat_cols(const std::vector<Tensor> &parts);
Tensor slice_cols(const Tensor &a, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor &a, const std::vector<int> &index);
Tensor segment_sum(const Tensor &a, const std::vector<int> &segment, int n_segments);
Tensor segment_mean(const Tensor &a, const std::vector<int> &segment, int n_segments);
/// Softmax of an n x 1 column within each segment.
Tensor segment_softmax(const Tensor &a, const std::vector<int> &segment, int n_segments);
/// Scales row i of a (n x c) by w(i, 0) (w is n x 1).
Tensor mul_rowwise(const Tensor &a, const Tensor &w);
/// Row-wise exponential map: n x 3 axis-angle -> n x 9 row-major rotations.
Tensor so3_exp_rows(const Tensor &v);
/// Row-wise logarithm: n x 9 rotations -> n x 3 axis-angle.
Tensor so3_log_rows(const Tensor &r);
/// Row-wise 3x3 products of n x 9 row-major matrices.
Tensor rowmat_mul(const Tensor &a, const Tensor &b);
/// sum_i w_i * |a_i|^2 as a 1 x 1 tensor.
Tensor weighted_sq_sum(const Tensor &a, const std::vector<double> &w);

} // namespace mcf::ad
