#include <algorithm>
#include <cmath>
#include <mcf/ad/autodiff.h>
#include <mcf/ad/dual.h>
#include <mcf/core/error.h>
#include <mcf/so3_kernels.h>
#include <unordered_set>

namespace mcf::ad {

namespace {
thread_local bool g_grad_enabled = true;

void require(bool ok, const char *what) {
  if (!ok)
    throw Error(ErrorKind::InvalidInput, std::string("autodiff: ") + what);
}

Tensor make_result(Mat value, std::vector<NodePtr> parents,
                   std::function<void(Node &)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled)
    for (const auto &p : parents)
      needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor(node);
}

bool wants(const Node &n) { return n.requires_grad; }
} // namespace

void Node::accumulate(const Mat &g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Mat Tensor::grad() const {
  if (m_node->grad.size() == 0)
    return Mat::Zero(rows(), cols());
  return m_node->grad;
}

Tensor constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(node);
}

Tensor parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(node);
}

NoGradGuard::NoGradGuard() : m_previous(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = m_previous; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor &root) {
  require(root.rows() == 1 && root.cols() == 1, "backward needs a 1x1 root");
  if (!root.requires_grad())
    return;
  // iterative post-order DFS
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (n->backward_fn && n->grad.size() != 0)
      n->backward_fn(*n);
  }
  // release intermediate gradients; leaves keep theirs
  for (Node *n : order)
    if (n->backward_fn)
      n->zero_grad();
}

Tensor matmul(const Tensor &a, const Tensor &b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Mat v = a.value() * b.value();
  return make_result(std::move(v), {a.node(), b.node()}, [](Node &self) {
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    if (wants(pa))
      pa.accumulate(self.grad * pb.value.transpose());
    if (wants(pb))
      pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor &a, const Tensor &b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  return make_result(a.value() + b.value(), {a.node(), b.node()}, [](Node &self) {
    for (auto &p : self.parents)
      if (wants(*p))
        p->accumulate(self.grad);
  });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  return make_result(a.value() - b.value(), {a.node(), b.node()}, [](Node &self) {
    if (wants(*self.parents[0]))
      self.parents[0]->accumulate(self.grad);
    if (wants(*self.parents[1]))
      self.parents[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul shape mismatch");
  Mat v = a.value().cwiseProduct(b.value());
  return make_result(std::move(v), {a.node(), b.node()}, [](Node &self) {
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    if (wants(pa))
      pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (wants(pb))
      pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Tensor add_row(const Tensor &a, const Tensor &row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Mat v = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(v), {a.node(), row.node()}, [](Node &self) {
    if (wants(*self.parents[0]))
      self.parents[0]->accumulate(self.grad);
    if (wants(*self.parents[1]))
      self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor scale(const Tensor &a, double s) {
  return make_result(a.value() * s, {a.node()}, [s](Node &self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Tensor silu(const Tensor &a) {
  const Mat &x = a.value();
  Mat sig = (1.0 + (-x.array()).exp()).inverse().matrix();
  Mat v = x.cwiseProduct(sig);
  return make_result(std::move(v), {a.node()}, [sig](Node &self) {
    const Mat &x = self.parents[0]->value;
    // d/dx x s(x) = s + x s (1 - s)
    Mat d = (sig.array() * (1.0 + x.array() * (1.0 - sig.array()))).matrix();
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor sum(const Tensor &a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result(std::move(v), {a.node()}, [](Node &self) {
    const Node &p = *self.parents[0];
    self.parents[0]->accumulate(
        Mat::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor concat_cols(const std::vector<Tensor> &parts) {
  require(!parts.empty(), "concat of nothing");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<NodePtr> parents;
  for (const auto &p : parts) {
    require(p.rows() == rows, "concat row mismatch");
    cols += p.cols();
    parents.push_back(p.node());
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (const auto &p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(v), std::move(parents), [](Node &self) {
    Eigen::Index at = 0;
    for (auto &p : self.parents) {
      const auto c = p->value.cols();
      if (wants(*p))
        p->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Tensor slice_cols(const Tensor &a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && start + count <= a.cols(), "slice out of range");
  Mat v = a.value().middleCols(start, count);
  return make_result(std::move(v), {a.node()}, [start, count](Node &self) {
    Node &p = *self.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Tensor gather_rows(const Tensor &a, const std::vector<int> &index) {
  const auto n = static_cast<Eigen::Index>(index.size());
  Mat v(n, a.cols());
  for (Eigen::Index i = 0; i < n; i++) {
    require(index[i] >= 0 && index[i] < a.rows(), "gather index out of range");
    v.row(i) = a.value().row(index[i]);
  }
  return make_result(std::move(v), {a.node()}, [index](Node &self) {
    Node &p = *self.parents[0];
    Mat g = Mat::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < index.size(); i++)
      g.row(index[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    p.accumulate(g);
  });
}

Tensor segment_sum(const Tensor &a, const std::vector<int> &segment,
                   int n_segments) {
  require(static_cast<Eigen::Index>(segment.size()) == a.rows(),
          "segment ids length mismatch");
  Mat v = Mat::Zero(n_segments, a.cols());
  for (std::size_t i = 0; i < segment.size(); i++) {
    require(segment[i] >= 0 && segment[i] < n_segments, "segment id out of range");
    v.row(segment[i]) += a.value().row(static_cast<Eigen::Index>(i));
  }
  return make_result(std::move(v), {a.node()}, [segment](Node &self) {
    Node &p = *self.parents[0];
    Mat g(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < segment.size(); i++)
      g.row(static_cast<Eigen::Index>(i)) = self.grad.row(segment[i]);
    p.accumulate(g);
  });
}

Tensor segment_mean(const Tensor &a, const std::vector<int> &segment,
                    int n_segments) {
  std::vector<double> counts(n_segments, 0.0);
  for (int s : segment) {
    require(s >= 0 && s < n_segments, "segment id out of range");
    counts[s] += 1.0;
  }
  Mat w(a.rows(), 1);
  for (std::size_t i = 0; i < segment.size(); i++)
    w(static_cast<Eigen::Index>(i), 0) = 1.0 / counts[segment[i]];
  return segment_sum(mul_rowwise(a, constant(std::move(w))), segment, n_segments);
}

Tensor segment_softmax(const Tensor &a, const std::vector<int> &segment,
                       int n_segments) {
  require(a.cols() == 1, "segment_softmax expects a column");
  require(static_cast<Eigen::Index>(segment.size()) == a.rows(),
          "segment ids length mismatch");
  std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < segment.size(); i++)
    mx[segment[i]] = std::max(mx[segment[i]], a.value()(i, 0));
  Mat v(a.rows(), 1);
  std::vector<double> total(n_segments, 0.0);
  for (std::size_t i = 0; i < segment.size(); i++) {
    v(i, 0) = std::exp(a.value()(i, 0) - mx[segment[i]]);
    total[segment[i]] += v(i, 0);
  }
  for (std::size_t i = 0; i < segment.size(); i++)
    v(i, 0) /= total[segment[i]];
  return make_result(v, {a.node()}, [segment, n_segments, v](Node &self) {
    // dx_i = y_i (g_i - sum_seg g_j y_j)
    std::vector<double> dot(n_segments, 0.0);
    for (std::size_t i = 0; i < segment.size(); i++)
      dot[segment[i]] += self.grad(i, 0) * v(i, 0);
    Mat g(v.rows(), 1);
    for (std::size_t i = 0; i < segment.size(); i++)
      g(i, 0) = v(i, 0) * (self.grad(i, 0) - dot[segment[i]]);
    self.parents[0]->accumulate(g);
  });
}

Tensor mul_rowwise(const Tensor &a, const Tensor &w) {
  require(w.cols() == 1 && w.rows() == a.rows(), "mul_rowwise shape mismatch");
  Mat v = w.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(v), {a.node(), w.node()}, [](Node &self) {
    Node &pa = *self.parents[0], &pw = *self.parents[1];
    if (wants(pa))
      pa.accumulate(pw.value.col(0).asDiagonal() * self.grad);
    if (wants(pw))
      pw.accumulate(self.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

Tensor so3_exp_rows(const Tensor &v) {
  require(v.cols() == 3, "so3_exp_rows expects n x 3");
  const auto n = v.rows();
  Mat out(n, 9);
  Mat jac(n, 27); // row-major 9 x 3 per row
  for (Eigen::Index i = 0; i < n; i++) {
    so3::V3<Dual<3>> x;
    for (int k = 0; k < 3; k++)
      x[k] = Dual<3>::variable(v.value()(i, k), k);
    const auto r = so3::exp_kernel(x);
    for (int e = 0; e < 9; e++) {
      out(i, e) = r[e].v;
      for (int k = 0; k < 3; k++)
        jac(i, 3 * e + k) = r[e].d[k];
    }
  }
  return make_result(std::move(out), {v.node()}, [jac](Node &self) {
    Mat g = Mat::Zero(jac.rows(), 3);
    for (Eigen::Index i = 0; i < jac.rows(); i++)
      for (int e = 0; e < 9; e++)
        for (int k = 0; k < 3; k++)
          g(i, k) += self.grad(i, e) * jac(i, 3 * e + k);
    self.parents[0]->accumulate(g);
  });
}

Tensor so3_log_rows(const Tensor &r) {
  require(r.cols() == 9, "so3_log_rows expects n x 9");
  const auto n = r.rows();
  Mat out(n, 3);
  Mat jac(n, 27); // row-major 3 x 9 per row
  for (Eigen::Index i = 0; i < n; i++) {
    so3::M3<Dual<9>> x;
    for (int e = 0; e < 9; e++)
      x[e] = Dual<9>::variable(r.value()(i, e), e);
    const auto w = so3::log_kernel(x);
    for (int k = 0; k < 3; k++) {
      out(i, k) = w[k].v;
      for (int e = 0; e < 9; e++)
        jac(i, 9 * k + e) = w[k].d[e];
    }
  }
  return make_result(std::move(out), {r.node()}, [jac](Node &self) {
    Mat g = Mat::Zero(jac.rows(), 9);
    for (Eigen::Index i = 0; i < jac.rows(); i++)
      for (int k = 0; k < 3; k++)
        for (int e = 0; e < 9; e++)
          g(i, e) += self.grad(i, k) * jac(i, 9 * k + e);
    self.parents[0]->accumulate(g);
  });
}

namespace {
using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
inline Eigen::Map<const RowMat3> as_m3(const Mat &m, Eigen::Index row) {
  return Eigen::Map<const RowMat3>(m.row(row).data());
}
} // namespace

Tensor rowmat_mul(const Tensor &a, const Tensor &b) {
  require(a.cols() == 9 && b.cols() == 9 && a.rows() == b.rows(),
          "rowmat_mul expects matching n x 9");
  const auto n = a.rows();
  Mat out(n, 9);
  for (Eigen::Index i = 0; i < n; i++) {
    RowMat3 c = as_m3(a.value(), i) * as_m3(b.value(), i);
    out.row(i) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(c.data());
  }
  return make_result(std::move(out), {a.node(), b.node()}, [](Node &self) {
    Node &pa = *self.parents[0], &pb = *self.parents[1];
    const auto n = self.grad.rows();
    Mat ga(n, 9), gb(n, 9);
    for (Eigen::Index i = 0; i < n; i++) {
      const auto dc = as_m3(self.grad, i);
      RowMat3 da = dc * as_m3(pb.value, i).transpose();
      RowMat3 db = as_m3(pa.value, i).transpose() * dc;
      ga.row(i) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(da.data());
      gb.row(i) = Eigen::Map<const Eigen::Matrix<double, 1, 9>>(db.data());
    }
    if (wants(pa))
      pa.accumulate(ga);
    if (wants(pb))
      pb.accumulate(gb);
  });
}

Tensor weighted_sq_sum(const Tensor &a, const std::vector<double> &w) {
  require(static_cast<Eigen::Index>(w.size()) == a.rows(),
          "weighted_sq_sum weight length mismatch");
  Mat v(1, 1);
  v(0, 0) = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); i++)
    v(0, 0) += w[i] * a.value().row(i).squaredNorm();
  return make_result(std::move(v), {a.node()}, [w](Node &self) {
    Node &p = *self.parents[0];
    Mat g(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < g.rows(); i++)
      g.row(i) = 2.0 * w[i] * self.grad(0, 0) * p.value.row(i);
    p.accumulate(g);
  });
}

} // namespace mcf::ad
