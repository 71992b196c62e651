#include "evoquer/neural/graph.hpp"

#include <cmath>

namespace evoquer::neural {

Parameter& ParameterSet::create(const std::string& name, int rows, int cols) {
  if (by_name_.count(name))
    fail(ErrorKind::validation, "duplicate parameter name: " + name);
  if (rows < 1 || cols < 1)
    fail(ErrorKind::validation, "parameter with empty shape: " + name);
  params_.push_back(Parameter{name, Mat::Zero(rows, cols), Mat::Zero(rows, cols), true});
  Parameter& p = params_.back();
  by_name_[name] = &p;
  return p;
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail(ErrorKind::validation, "no parameter named " + name);
  return *it->second;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) fail(ErrorKind::validation, "no parameter named " + name);
  return *it->second;
}

bool ParameterSet::contains(const std::string& name) const {
  return by_name_.count(name) > 0;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParameterSet::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void init_uniform(ParameterSet& params, Rng& rng) {
  for (Parameter* p : params.all()) {
    const int fan = p->cols() > 1 ? p->cols() : p->rows();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan));
    for (int c = 0; c < p->cols(); ++c)
      for (int r = 0; r < p->rows(); ++r)
        p->value(r, c) = rng.uniform(-bound, bound);
  }
}

bool all_finite(const Mat& m) {
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (!std::isfinite(m(r, c))) return false;
  return true;
}

int Graph::push(Mat val, bool needs_grad,
                std::function<void(Graph&, const Node&)> back) {
  nodes_.push_back(Node{std::move(val), Mat(), needs_grad, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::accumulate(int target, const Mat& g) {
  Node& n = node(target);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  n.grad += g;
}

Value Graph::param(Parameter& p) {
  Parameter* ptr = &p;
  const int i = push(p.value, true, [ptr](Graph&, const Node& self) {
    if (ptr->trainable) ptr->grad += self.grad;
  });
  return {i};
}

Value Graph::input(Mat v) { return {push(std::move(v), true, nullptr)}; }

Value Graph::constant(Mat v) { return {push(std::move(v), false, nullptr)}; }

Value Graph::scalar_constant(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(m);
}

Value Graph::embed(Parameter& table, int row) {
  if (row < 0 || row >= table.rows())
    fail(ErrorKind::validation, "embed: index " + std::to_string(row) +
                                    " out of range for " + table.name);
  Parameter* ptr = &table;
  const int i = push(table.value.row(row).transpose(), true,
                     [ptr, row](Graph&, const Node& self) {
                       if (ptr->trainable)
                         ptr->grad.row(row) += self.grad.transpose();
                     });
  return {i};
}

Value Graph::matmul(Value a, Value b) {
  const Node &na = node(a.i), &nb = node(b.i);
  if (na.val.cols() != nb.val.rows())
    fail(ErrorKind::validation, "matmul: shape mismatch");
  const int ai = a.i, bi = b.i;
  const int i = push(na.val * nb.val, true, [ai, bi](Graph& g, const Node& self) {
    g.accumulate(ai, self.grad * g.node(bi).val.transpose());
    g.accumulate(bi, g.node(ai).val.transpose() * self.grad);
  });
  return {i};
}

Value Graph::add(Value a, Value b) {
  const Node &na = node(a.i), &nb = node(b.i);
  if (na.val.rows() != nb.val.rows() || na.val.cols() != nb.val.cols())
    fail(ErrorKind::validation, "add: shape mismatch");
  const int ai = a.i, bi = b.i;
  const int i = push(na.val + nb.val, true, [ai, bi](Graph& g, const Node& self) {
    g.accumulate(ai, self.grad);
    g.accumulate(bi, self.grad);
  });
  return {i};
}

Value Graph::sub(Value a, Value b) {
  const Node &na = node(a.i), &nb = node(b.i);
  if (na.val.rows() != nb.val.rows() || na.val.cols() != nb.val.cols())
    fail(ErrorKind::validation, "sub: shape mismatch");
  const int ai = a.i, bi = b.i;
  const int i = push(na.val - nb.val, true, [ai, bi](Graph& g, const Node& self) {
    g.accumulate(ai, self.grad);
    g.accumulate(bi, -self.grad);
  });
  return {i};
}

Value Graph::hadamard(Value a, Value b) {
  const Node &na = node(a.i), &nb = node(b.i);
  if (na.val.rows() != nb.val.rows() || na.val.cols() != nb.val.cols())
    fail(ErrorKind::validation, "hadamard: shape mismatch");
  const int ai = a.i, bi = b.i;
  const int i = push(na.val.cwiseProduct(nb.val), true,
                     [ai, bi](Graph& g, const Node& self) {
                       g.accumulate(ai, self.grad.cwiseProduct(g.node(bi).val));
                       g.accumulate(bi, self.grad.cwiseProduct(g.node(ai).val));
                     });
  return {i};
}

Value Graph::affine(Value a, double s, double shift) {
  const int ai = a.i;
  Mat v = s * node(a.i).val;
  v.array() += shift;
  const int i = push(std::move(v), true, [ai, s](Graph& g, const Node& self) {
    g.accumulate(ai, s * self.grad);
  });
  return {i};
}

Value Graph::add_col_broadcast(Value m, Value col) {
  const Node &nm = node(m.i), &nc = node(col.i);
  if (nc.val.cols() != 1 || nm.val.rows() != nc.val.rows())
    fail(ErrorKind::validation, "add_col_broadcast: shape mismatch");
  const int mi = m.i, ci = col.i;
  Mat v = nm.val;
  v.colwise() += nc.val.col(0);
  const int i = push(std::move(v), true, [mi, ci](Graph& g, const Node& self) {
    g.accumulate(mi, self.grad);
    g.accumulate(ci, self.grad.rowwise().sum());
  });
  return {i};
}

Value Graph::sigmoid(Value a) {
  const int ai = a.i;
  Mat v = node(a.i).val.unaryExpr([](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  });
  const int i = push(std::move(v), true, [ai](Graph& g, const Node& self) {
    const Mat& y = self.val;
    g.accumulate(ai, self.grad.cwiseProduct(
                         y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y)));
  });
  return {i};
}

Value Graph::tanh(Value a) {
  const int ai = a.i;
  Mat v = node(a.i).val.array().tanh().matrix();
  const int i = push(std::move(v), true, [ai](Graph& g, const Node& self) {
    const Mat& y = self.val;
    g.accumulate(ai, self.grad.cwiseProduct(
                         (Mat::Ones(y.rows(), y.cols()) - y.cwiseProduct(y))));
  });
  return {i};
}

Value Graph::softmax(Value a) {
  const Node& na = node(a.i);
  if (na.val.cols() != 1) fail(ErrorKind::validation, "softmax: expected column vector");
  const int ai = a.i;
  const double mx = na.val.maxCoeff();
  Mat e = (na.val.array() - mx).exp().matrix();
  e /= e.sum();
  const int i = push(std::move(e), true, [ai](Graph& g, const Node& self) {
    const Mat& s = self.val;
    const double inner = (self.grad.cwiseProduct(s)).sum();
    Mat gin = s.cwiseProduct(self.grad - Mat::Constant(s.rows(), 1, inner));
    g.accumulate(ai, gin);
  });
  return {i};
}

Value Graph::clamp(Value a, double lo, double hi) {
  const int ai = a.i;
  Mat v = node(a.i).val.cwiseMax(lo).cwiseMin(hi);
  // pass-through mask from the pre-clamp input, blocked at the rails
  const int i = push(std::move(v), true, [ai, lo, hi](Graph& g, const Node& self) {
    const Mat& x = g.node(ai).val;
    Mat gin = self.grad;
    for (int c = 0; c < x.cols(); ++c)
      for (int r = 0; r < x.rows(); ++r)
        if (x(r, c) <= lo || x(r, c) >= hi) gin(r, c) = 0.0;
    g.accumulate(ai, gin);
  });
  return {i};
}

Value Graph::max_const(Value a, double floor) {
  const int ai = a.i;
  Mat v = node(a.i).val.cwiseMax(floor);
  const int i = push(std::move(v), true, [ai, floor](Graph& g, const Node& self) {
    const Mat& x = g.node(ai).val;
    Mat gin = self.grad;
    for (int c = 0; c < x.cols(); ++c)
      for (int r = 0; r < x.rows(); ++r)
        if (x(r, c) <= floor) gin(r, c) = 0.0;
    g.accumulate(ai, gin);
  });
  return {i};
}

Value Graph::concat_rows(std::span<const Value> parts) {
  if (parts.empty()) fail(ErrorKind::validation, "concat_rows: empty");
  int rows = 0;
  const int cols = static_cast<int>(node(parts[0].i).val.cols());
  std::vector<int> idx;
  for (const Value& p : parts) {
    if (node(p.i).val.cols() != cols)
      fail(ErrorKind::validation, "concat_rows: column mismatch");
    rows += static_cast<int>(node(p.i).val.rows());
    idx.push_back(p.i);
  }
  Mat v(rows, cols);
  int at = 0;
  for (int pi : idx) {
    const Mat& part = node(pi).val;
    v.middleRows(at, part.rows()) = part;
    at += static_cast<int>(part.rows());
  }
  const int i = push(std::move(v), true, [idx](Graph& g, const Node& self) {
    int at2 = 0;
    for (int pi : idx) {
      const int r = static_cast<int>(g.node(pi).val.rows());
      g.accumulate(pi, self.grad.middleRows(at2, r));
      at2 += r;
    }
  });
  return {i};
}

Value Graph::concat_cols(std::span<const Value> parts) {
  if (parts.empty()) fail(ErrorKind::validation, "concat_cols: empty");
  int cols = 0;
  const int rows = static_cast<int>(node(parts[0].i).val.rows());
  std::vector<int> idx;
  for (const Value& p : parts) {
    if (node(p.i).val.rows() != rows)
      fail(ErrorKind::validation, "concat_cols: row mismatch");
    cols += static_cast<int>(node(p.i).val.cols());
    idx.push_back(p.i);
  }
  Mat v(rows, cols);
  int at = 0;
  for (int pi : idx) {
    const Mat& part = node(pi).val;
    v.middleCols(at, part.cols()) = part;
    at += static_cast<int>(part.cols());
  }
  const int i = push(std::move(v), true, [idx](Graph& g, const Node& self) {
    int at2 = 0;
    for (int pi : idx) {
      const int c = static_cast<int>(g.node(pi).val.cols());
      g.accumulate(pi, self.grad.middleCols(at2, c));
      at2 += c;
    }
  });
  return {i};
}

Value Graph::slice_rows(Value a, int first, int count) {
  const Node& na = node(a.i);
  if (first < 0 || count < 1 || first + count > na.val.rows())
    fail(ErrorKind::validation, "slice_rows: out of range");
  const int ai = a.i;
  const int i = push(na.val.middleRows(first, count), true,
                     [ai, first, count](Graph& g, const Node& self) {
                       const Node& pa = g.node(ai);
                       Mat gin = Mat::Zero(pa.val.rows(), pa.val.cols());
                       gin.middleRows(first, count) = self.grad;
                       g.accumulate(ai, gin);
                     });
  return {i};
}

Value Graph::transpose(Value a) {
  const int ai = a.i;
  const int i = push(node(a.i).val.transpose(), true,
                     [ai](Graph& g, const Node& self) {
                       g.accumulate(ai, self.grad.transpose());
                     });
  return {i};
}

Value Graph::sum(Value a) {
  const int ai = a.i;
  Mat v(1, 1);
  v(0, 0) = node(a.i).val.sum();
  const int i = push(std::move(v), true, [ai](Graph& g, const Node& self) {
    const Node& pa = g.node(ai);
    g.accumulate(ai, Mat::Constant(pa.val.rows(), pa.val.cols(), self.grad(0, 0)));
  });
  return {i};
}

Value Graph::mean(Value a) {
  const double n = static_cast<double>(node(a.i).val.size());
  return scale(sum(a), 1.0 / n);
}

Value Graph::dot(Value a, Value b) {
  const Node &na = node(a.i), &nb = node(b.i);
  if (na.val.cols() != 1 || nb.val.cols() != 1 || na.val.rows() != nb.val.rows())
    fail(ErrorKind::validation, "dot: expected equal-length column vectors");
  const int ai = a.i, bi = b.i;
  Mat v(1, 1);
  v(0, 0) = na.val.col(0).dot(nb.val.col(0));
  const int i = push(std::move(v), true, [ai, bi](Graph& g, const Node& self) {
    const double go = self.grad(0, 0);
    g.accumulate(ai, go * g.node(bi).val);
    g.accumulate(bi, go * g.node(ai).val);
  });
  return {i};
}

Value Graph::nll_pick(Value logits, int target) {
  const Node& nl = node(logits.i);
  if (nl.val.cols() != 1) fail(ErrorKind::validation, "nll_pick: expected column vector");
  if (target < 0 || target >= nl.val.rows())
    fail(ErrorKind::validation, "nll_pick: target out of range");
  const int li = logits.i;
  const double mx = nl.val.maxCoeff();
  const Mat shifted = nl.val.array() - mx;
  const double lse = std::log(shifted.array().exp().sum());
  Mat softmax_val = (shifted.array() - lse).exp().matrix();
  Mat v(1, 1);
  v(0, 0) = lse - shifted(target, 0);
  const int i = push(std::move(v), true,
                     [li, target, softmax_val](Graph& g, const Node& self) {
                       Mat gin = softmax_val * self.grad(0, 0);
                       gin(target, 0) -= self.grad(0, 0);
                       g.accumulate(li, gin);
                     });
  return {i};
}

Value Graph::smooth_l1(Value pred, const Mat& target, double beta) {
  const Node& np = node(pred.i);
  if (np.val.rows() != target.rows() || np.val.cols() != target.cols())
    fail(ErrorKind::validation, "smooth_l1: shape mismatch");
  if (!(beta > 0.0)) fail(ErrorKind::validation, "smooth_l1: beta <= 0");
  const int pi = pred.i;
  const Mat diff = np.val - target;
  const double n = static_cast<double>(diff.size());
  double total = 0.0;
  for (int c = 0; c < diff.cols(); ++c)
    for (int r = 0; r < diff.rows(); ++r) {
      const double d = std::abs(diff(r, c));
      total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
  Mat v(1, 1);
  v(0, 0) = total / n;
  const int i = push(std::move(v), true,
                     [pi, diff, beta, n](Graph& g, const Node& self) {
                       const double go = self.grad(0, 0) / n;
                       Mat gin(diff.rows(), diff.cols());
                       for (int c = 0; c < diff.cols(); ++c)
                         for (int r = 0; r < diff.rows(); ++r) {
                           const double d = diff(r, c);
                           gin(r, c) = go * (std::abs(d) < beta
                                                 ? d / beta
                                                 : (d > 0 ? 1.0 : -1.0));
                         }
                       g.accumulate(pi, gin);
                     });
  return {i};
}

void Graph::backward(Value root) {
  if (!root.valid() || root.i >= size())
    fail(ErrorKind::validation, "backward: invalid root");
  Node& r = node(root.i);
  if (r.val.rows() != 1 || r.val.cols() != 1)
    fail(ErrorKind::validation, "backward: root must be scalar");
  r.grad = Mat::Ones(1, 1);
  for (int i = root.i; i >= 0; --i) {
    Node& n = node(i);
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n);
  }
}

const Mat& Graph::value(Value v) const {
  if (!v.valid() || v.i >= size()) fail(ErrorKind::validation, "value: invalid handle");
  return node(v.i).val;
}

Mat Graph::grad(Value v) const {
  if (!v.valid() || v.i >= size()) fail(ErrorKind::validation, "grad: invalid handle");
  const Node& n = node(v.i);
  if (n.grad.size() == 0) return Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

}  // namespace evoquer::neural
