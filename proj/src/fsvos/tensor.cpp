#include "fsvos/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace fsvos {

namespace {

uint64_t g_next_id = 1;
bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("tensor: " + msg); }

void check(bool ok, const char* msg) {
  if (!ok) fail(msg);
}

std::shared_ptr<TensorNode> make_node(Shape shape, Eigen::ArrayXd value) {
  auto n = std::make_shared<TensorNode>();
  check(shape_size(shape) == value.size(), "shape/value size mismatch");
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->id = g_next_id++;
  return n;
}

void attach(const std::shared_ptr<TensorNode>& n,
            std::vector<std::shared_ptr<TensorNode>> inputs,
            std::function<void(TensorNode&)> fn) {
  if (!g_grad_enabled) return;
  bool need = false;
  for (const auto& i : inputs)
    if (i->requires_grad) need = true;
  if (!need) return;
  n->requires_grad = true;
  n->inputs = std::move(inputs);
  n->backward_fn = std::move(fn);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

void TensorNode::accumulate(const Eigen::ArrayXd& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev; }

Tensor Tensor::detach() const {
  return Tensor(make_node(node->shape, node->value));
}

void Tensor::backward() const {
  // The creation counter orders every node after its inputs, so a descending
  // id sweep over the reachable set is a valid reverse topological order.
  std::vector<std::shared_ptr<TensorNode>> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::shared_ptr<TensorNode>> stack{node};
  seen.insert(node.get());
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs)
      if (seen.insert(in.get()).second) stack.push_back(in);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });
  node->grad = Eigen::ArrayXd::Ones(node->value.size());
  for (const auto& n : order) {
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
    if (n->backward_fn) {
      // Graph is single-use; release edges and intermediate grads as we go.
      n->backward_fn = nullptr;
      n->inputs.clear();
      n->grad.resize(0);
    }
  }
}

// ---- construction ----

Tensor zeros(const Shape& shape) {
  return Tensor(make_node(shape, Eigen::ArrayXd::Zero(shape_size(shape))));
}

Tensor full(const Shape& shape, double v) {
  return Tensor(make_node(shape, Eigen::ArrayXd::Constant(shape_size(shape), v)));
}

Tensor from_vector(const Shape& shape, const std::vector<double>& data) {
  check((int64_t)data.size() == shape_size(shape), "from_vector size mismatch");
  Eigen::ArrayXd v = Eigen::Map<const Eigen::ArrayXd>(data.data(), data.size());
  return Tensor(make_node(shape, std::move(v)));
}

Tensor from_array(const Shape& shape, Eigen::ArrayXd data) {
  return Tensor(make_node(shape, std::move(data)));
}

Tensor leaf_param(const Shape& shape, Eigen::ArrayXd data) {
  auto n = make_node(shape, std::move(data));
  n->requires_grad = true;
  return Tensor(n);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "add shape mismatch");
  auto n = make_node(a.shape(), a.raw() + b.raw());
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    if (an->requires_grad) an->accumulate(o.grad);
    if (bn->requires_grad) bn->accumulate(o.grad);
  });
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "sub shape mismatch");
  auto n = make_node(a.shape(), a.raw() - b.raw());
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    if (an->requires_grad) an->accumulate(o.grad);
    if (bn->requires_grad) bn->accumulate(-o.grad);
  });
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "mul shape mismatch");
  auto n = make_node(a.shape(), a.raw() * b.raw());
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    if (an->requires_grad) an->accumulate(o.grad * bn->value);
    if (bn->requires_grad) bn->accumulate(o.grad * an->value);
  });
  return Tensor(n);
}

Tensor div(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "div shape mismatch");
  auto n = make_node(a.shape(), a.raw() / b.raw());
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    if (an->requires_grad) an->accumulate(o.grad / bn->value);
    if (bn->requires_grad)
      bn->accumulate(-o.grad * an->value / (bn->value * bn->value));
  });
  return Tensor(n);
}

Tensor add_scalar(const Tensor& a, double s) {
  auto n = make_node(a.shape(), a.raw() + s);
  attach(n, {a.node}, [an = a.node](TensorNode& o) { an->accumulate(o.grad); });
  return Tensor(n);
}

Tensor mul_scalar(const Tensor& a, double s) {
  auto n = make_node(a.shape(), a.raw() * s);
  attach(n, {a.node, }, [an = a.node, s](TensorNode& o) { an->accumulate(o.grad * s); });
  return Tensor(n);
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  auto n = make_node(a.shape(), a.raw().max(0.0));
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(o.grad * (an->value > 0.0).cast<double>());
  });
  return Tensor(n);
}

Tensor sigmoid(const Tensor& a) {
  Eigen::ArrayXd y = 1.0 / (1.0 + (-a.raw()).exp());
  auto n = make_node(a.shape(), std::move(y));
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(o.grad * o.value * (1.0 - o.value));
  });
  return Tensor(n);
}

Tensor exp_t(const Tensor& a) {
  auto n = make_node(a.shape(), a.raw().exp());
  attach(n, {a.node}, [an = a.node](TensorNode& o) { an->accumulate(o.grad * o.value); });
  return Tensor(n);
}

Tensor log_t(const Tensor& a) {
  auto n = make_node(a.shape(), a.raw().log());
  attach(n, {a.node}, [an = a.node](TensorNode& o) { an->accumulate(o.grad / an->value); });
  return Tensor(n);
}

Tensor sqrt_t(const Tensor& a) {
  auto n = make_node(a.shape(), a.raw().sqrt());
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(o.grad * 0.5 / o.value);
  });
  return Tensor(n);
}

Tensor abs_t(const Tensor& a) {
  auto n = make_node(a.shape(), a.raw().abs());
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(o.grad * an->value.sign());
  });
  return Tensor(n);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  auto n = make_node(a.shape(), a.raw().max(lo).min(hi));
  attach(n, {a.node}, [an = a.node, lo, hi](TensorNode& o) {
    Eigen::ArrayXd pass = ((an->value >= lo) && (an->value <= hi)).cast<double>();
    an->accumulate(o.grad * pass);
  });
  return Tensor(n);
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "minimum shape mismatch");
  auto n = make_node(a.shape(), a.raw().min(b.raw()));
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    Eigen::ArrayXd apick = (an->value <= bn->value).cast<double>();
    if (an->requires_grad) an->accumulate(o.grad * apick);
    if (bn->requires_grad) bn->accumulate(o.grad * (1.0 - apick));
  });
  return Tensor(n);
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "maximum shape mismatch");
  auto n = make_node(a.shape(), a.raw().max(b.raw()));
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node](TensorNode& o) {
    Eigen::ArrayXd apick = (an->value >= bn->value).cast<double>();
    if (an->requires_grad) an->accumulate(o.grad * apick);
    if (bn->requires_grad) bn->accumulate(o.grad * (1.0 - apick));
  });
  return Tensor(n);
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.rows(),
        "matmul shape mismatch");
  int m = a.rows(), k = a.cols(), nn = b.cols();
  Eigen::ArrayXd out(m * (int64_t)nn);
  MapM(out.data(), m, nn) = CMapM(a.data(), m, k) * CMapM(b.data(), k, nn);
  auto n = make_node({m, nn}, std::move(out));
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node, m, k, nn](TensorNode& o) {
    CMapM g(o.grad.data(), m, nn);
    if (an->requires_grad) {
      Eigen::ArrayXd ga(m * (int64_t)k);
      MapM(ga.data(), m, k) = g * CMapM(bn->value.data(), k, nn).transpose();
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Eigen::ArrayXd gb(k * (int64_t)nn);
      MapM(gb.data(), k, nn) = CMapM(an->value.data(), m, k).transpose() * g;
      bn->accumulate(gb);
    }
  });
  return Tensor(n);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.cols(),
        "matmul_nt shape mismatch");
  int m = a.rows(), k = a.cols(), nn = b.rows();
  Eigen::ArrayXd out(m * (int64_t)nn);
  MapM(out.data(), m, nn) = CMapM(a.data(), m, k) * CMapM(b.data(), nn, k).transpose();
  auto n = make_node({m, nn}, std::move(out));
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node, m, k, nn](TensorNode& o) {
    CMapM g(o.grad.data(), m, nn);
    if (an->requires_grad) {
      Eigen::ArrayXd ga(m * (int64_t)k);
      MapM(ga.data(), m, k) = g * CMapM(bn->value.data(), nn, k);
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Eigen::ArrayXd gb(nn * (int64_t)k);
      MapM(gb.data(), nn, k) = g.transpose() * CMapM(an->value.data(), m, k);
      bn->accumulate(gb);
    }
  });
  return Tensor(n);
}

Tensor transpose(const Tensor& a) {
  check(a.shape().size() == 2, "transpose needs 2-d");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd out(a.size());
  MapM(out.data(), c, m) = CMapM(a.data(), m, c).transpose();
  auto n = make_node({c, m}, std::move(out));
  attach(n, {a.node}, [an = a.node, m, c](TensorNode& o) {
    Eigen::ArrayXd ga(o.grad.size());
    MapM(ga.data(), m, c) = CMapM(o.grad.data(), c, m).transpose();
    an->accumulate(ga);
  });
  return Tensor(n);
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, const Shape& shape) {
  check(shape_size(shape) == a.size(), "reshape size mismatch");
  auto n = make_node(shape, a.raw());
  attach(n, {a.node}, [an = a.node](TensorNode& o) { an->accumulate(o.grad); });
  return Tensor(n);
}

Tensor concat_rows(const std::vector<Tensor>& ts) {
  check(!ts.empty(), "concat_rows of nothing");
  int c = ts[0].cols();
  int m = 0;
  for (const auto& t : ts) {
    check(t.shape().size() == 2 && t.cols() == c, "concat_rows col mismatch");
    m += t.rows();
  }
  Eigen::ArrayXd out(m * (int64_t)c);
  int64_t off = 0;
  std::vector<std::shared_ptr<TensorNode>> ins;
  for (const auto& t : ts) {
    out.segment(off, t.size()) = t.raw();
    off += t.size();
    ins.push_back(t.node);
  }
  auto n = make_node({m, c}, std::move(out));
  attach(n, ins, [ins](TensorNode& o) {
    int64_t off2 = 0;
    for (const auto& in : ins) {
      if (in->requires_grad) in->accumulate(o.grad.segment(off2, in->value.size()));
      off2 += in->value.size();
    }
  });
  return Tensor(n);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2 && a.rows() == b.rows(),
        "concat_cols row mismatch");
  int m = a.rows(), ca = a.cols(), cb = b.cols();
  Eigen::ArrayXd out(m * (int64_t)(ca + cb));
  MapM o(out.data(), m, ca + cb);
  o.leftCols(ca) = CMapM(a.data(), m, ca);
  o.rightCols(cb) = CMapM(b.data(), m, cb);
  auto n = make_node({m, ca + cb}, std::move(out));
  attach(n, {a.node, b.node}, [an = a.node, bn = b.node, m, ca, cb](TensorNode& o2) {
    CMapM g(o2.grad.data(), m, ca + cb);
    if (an->requires_grad) {
      Eigen::ArrayXd ga(m * (int64_t)ca);
      MapM(ga.data(), m, ca) = g.leftCols(ca);
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      Eigen::ArrayXd gb(m * (int64_t)cb);
      MapM(gb.data(), m, cb) = g.rightCols(cb);
      bn->accumulate(gb);
    }
  });
  return Tensor(n);
}

Tensor slice_rows(const Tensor& a, int begin, int count) {
  check(a.shape().size() == 2 && begin >= 0 && begin + count <= a.rows(),
        "slice_rows out of range");
  int c = a.cols();
  Eigen::ArrayXd out = a.raw().segment((int64_t)begin * c, (int64_t)count * c);
  auto n = make_node({count, c}, std::move(out));
  attach(n, {a.node}, [an = a.node, begin, count, c](TensorNode& o) {
    Eigen::ArrayXd ga = Eigen::ArrayXd::Zero(an->value.size());
    ga.segment((int64_t)begin * c, (int64_t)count * c) = o.grad;
    an->accumulate(ga);
  });
  return Tensor(n);
}

Tensor broadcast_rows(const Tensor& v, int m) {
  check(v.shape().size() == 2 && v.rows() == 1, "broadcast_rows wants {1,C}");
  int c = v.cols();
  Eigen::ArrayXd out(m * (int64_t)c);
  MapM(out.data(), m, c).rowwise() = CMapM(v.data(), 1, c).row(0);
  auto n = make_node({m, c}, std::move(out));
  attach(n, {v.node}, [vn = v.node, m, c](TensorNode& o) {
    Eigen::ArrayXd gv(c);
    Eigen::Map<Eigen::RowVectorXd>(gv.data(), c) =
        CMapM(o.grad.data(), m, c).colwise().sum();
    vn->accumulate(gv);
  });
  return Tensor(n);
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  check(a.shape().size() == 2 && s.shape().size() == 2 && s.cols() == 1 &&
            s.rows() == a.rows(),
        "scale_rows wants {M,C},{M,1}");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd out(a.size());
  MapM(out.data(), m, c) =
      CMapM(a.data(), m, c).array().colwise() *
      Eigen::Map<const Eigen::ArrayXd>(s.data(), m);
  auto n = make_node({m, c}, std::move(out));
  attach(n, {a.node, s.node}, [an = a.node, sn = s.node, m, c](TensorNode& o) {
    CMapM g(o.grad.data(), m, c);
    if (an->requires_grad) {
      Eigen::ArrayXd ga(o.grad.size());
      MapM(ga.data(), m, c) =
          g.array().colwise() * Eigen::Map<const Eigen::ArrayXd>(sn->value.data(), m);
      an->accumulate(ga);
    }
    if (sn->requires_grad) {
      Eigen::ArrayXd gs(m);
      Eigen::Map<Eigen::VectorXd>(gs.data(), m) =
          (g.array() * CMapM(an->value.data(), m, c).array()).rowwise().sum();
      sn->accumulate(gs);
    }
  });
  return Tensor(n);
}

Tensor chw_to_mc(const Tensor& x) {
  check(x.shape().size() == 3, "chw_to_mc wants {C,H,W}");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  int64_t m = (int64_t)h * w;
  Eigen::ArrayXd out(m * c);
  // out(p, ch) = x(ch, p)
  MapM(out.data(), m, c) = CMapM(x.data(), c, m).transpose();
  auto n = make_node({(int)m, c}, std::move(out));
  attach(n, {x.node}, [xn = x.node, c, m](TensorNode& o) {
    Eigen::ArrayXd gx(o.grad.size());
    MapM(gx.data(), c, m) = CMapM(o.grad.data(), m, c).transpose();
    xn->accumulate(gx);
  });
  return Tensor(n);
}

Tensor mc_to_chw(const Tensor& x, int h, int w) {
  check(x.shape().size() == 2 && x.rows() == h * w, "mc_to_chw size mismatch");
  int c = x.cols();
  int64_t m = (int64_t)h * w;
  Eigen::ArrayXd out(m * c);
  MapM(out.data(), c, m) = CMapM(x.data(), m, c).transpose();
  auto n = make_node({c, h, w}, std::move(out));
  attach(n, {x.node}, [xn = x.node, c, m](TensorNode& o) {
    Eigen::ArrayXd gx(o.grad.size());
    MapM(gx.data(), m, c) = CMapM(o.grad.data(), c, m).transpose();
    xn->accumulate(gx);
  });
  return Tensor(n);
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  Eigen::ArrayXd v(1);
  v[0] = a.raw().sum();
  auto n = make_node({1}, std::move(v));
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(Eigen::ArrayXd::Constant(an->value.size(), o.grad[0]));
  });
  return Tensor(n);
}

Tensor mean_all(const Tensor& a) {
  Eigen::ArrayXd v(1);
  v[0] = a.raw().mean();
  auto n = make_node({1}, std::move(v));
  attach(n, {a.node}, [an = a.node](TensorNode& o) {
    an->accumulate(
        Eigen::ArrayXd::Constant(an->value.size(), o.grad[0] / an->value.size()));
  });
  return Tensor(n);
}

Tensor sum_rows(const Tensor& a) {
  check(a.shape().size() == 2, "sum_rows needs 2-d");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd v(c);
  Eigen::Map<Eigen::RowVectorXd>(v.data(), c) = CMapM(a.data(), m, c).colwise().sum();
  auto n = make_node({1, c}, std::move(v));
  attach(n, {a.node}, [an = a.node, m, c](TensorNode& o) {
    Eigen::ArrayXd ga(an->value.size());
    MapM(ga.data(), m, c).rowwise() = CMapM(o.grad.data(), 1, c).row(0);
    an->accumulate(ga);
  });
  return Tensor(n);
}

Tensor sum_cols(const Tensor& a) {
  check(a.shape().size() == 2, "sum_cols needs 2-d");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd v(m);
  Eigen::Map<Eigen::VectorXd>(v.data(), m) = CMapM(a.data(), m, c).rowwise().sum();
  auto n = make_node({m, 1}, std::move(v));
  attach(n, {a.node}, [an = a.node, m, c](TensorNode& o) {
    Eigen::ArrayXd ga(an->value.size());
    MapM(ga.data(), m, c).colwise() =
        Eigen::Map<const Eigen::VectorXd>(o.grad.data(), m);
    an->accumulate(ga);
  });
  return Tensor(n);
}

Tensor row_max(const Tensor& a) {
  check(a.shape().size() == 2, "row_max needs 2-d");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd v(m);
  auto arg = std::make_shared<std::vector<int>>(m);
  CMapM av(a.data(), m, c);
  for (int i = 0; i < m; ++i) {
    int j = 0;
    double best = av(i, 0);
    for (int k = 1; k < c; ++k)
      if (av(i, k) > best) {
        best = av(i, k);
        j = k;
      }
    v[i] = best;
    (*arg)[i] = j;
  }
  auto n = make_node({m, 1}, std::move(v));
  attach(n, {a.node}, [an = a.node, arg, m, c](TensorNode& o) {
    Eigen::ArrayXd ga = Eigen::ArrayXd::Zero(an->value.size());
    for (int i = 0; i < m; ++i) ga[(int64_t)i * c + (*arg)[i]] += o.grad[i];
    an->accumulate(ga);
  });
  return Tensor(n);
}

// ---- softmax ----

Tensor softmax_rows(const Tensor& a) {
  check(a.shape().size() == 2, "softmax_rows needs 2-d");
  int m = a.rows(), c = a.cols();
  Eigen::ArrayXd out(a.size());
  CMapM av(a.data(), m, c);
  MapM ov(out.data(), m, c);
  for (int i = 0; i < m; ++i) {
    Eigen::ArrayXd row = av.row(i).array();
    double mx = row.maxCoeff();
    Eigen::ArrayXd e = (row - mx).exp();
    ov.row(i) = (e / e.sum()).matrix().transpose();
  }
  auto n = make_node({m, c}, std::move(out));
  attach(n, {a.node}, [an = a.node, m, c](TensorNode& o) {
    Eigen::ArrayXd ga(o.grad.size());
    CMapM y(o.value.data(), m, c);
    CMapM g(o.grad.data(), m, c);
    MapM gm(ga.data(), m, c);
    for (int i = 0; i < m; ++i) {
      double dot = (g.row(i).array() * y.row(i).array()).sum();
      gm.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    an->accumulate(ga);
  });
  return Tensor(n);
}

Tensor minmax_norm(const Tensor& v) {
  int64_t n_el = v.size();
  check(n_el > 0, "minmax_norm of empty");
  const Eigen::ArrayXd& x = v.raw();
  int amin = 0, amax = 0;
  for (int64_t i = 1; i < n_el; ++i) {
    if (x[i] < x[amin]) amin = (int)i;
    if (x[i] > x[amax]) amax = (int)i;
  }
  double d = x[amax] - x[amin];
  Eigen::ArrayXd y;
  if (d == 0.0)
    y = Eigen::ArrayXd::Zero(n_el);
  else
    y = (x - x[amin]) / d;
  auto n = make_node(v.shape(), std::move(y));
  attach(n, {v.node}, [vn = v.node, amin, amax, d](TensorNode& o) {
    if (d == 0.0) return;  // flat input: zero subgradient
    double gsum = o.grad.sum();
    double gy = (o.grad * o.value).sum();
    Eigen::ArrayXd gv = o.grad / d;
    gv[amin] -= gsum / d;
    gv[amax] -= gy / d;
    gv[amin] += gy / d;
    vn->accumulate(gv);
  });
  return Tensor(n);
}

// ---- image ops ----

namespace {

// col is {Cin*kh*kw, Ho*Wo}; patches read with zero padding.
void im2col(const double* x, int cin, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, MatRM& col) {
  col.resize((int64_t)cin * kh * kw, (int64_t)ho * wo);
  for (int c = 0; c < cin; ++c) {
    const double* plane = x + (int64_t)c * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        int r = (c * kh + ki) * kw + kj;
        double* dst = col.row(r).data();
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ki;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kj;
            dst[(int64_t)oy * wo + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[(int64_t)iy * w + ix]
                                                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const MatRM& col, int cin, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* gx) {
  for (int c = 0; c < cin; ++c) {
    double* plane = gx + (int64_t)c * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        int r = (c * kh + ki) * kw + kj;
        const double* src = col.row(r).data();
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) plane[(int64_t)iy * w + ix] += src[(int64_t)oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check(x.shape().size() == 3 && w.shape().size() == 4, "conv2d wants {C,H,W},{O,C,kh,kw}");
  int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == cin, "conv2d channel mismatch");
  check(b.size() == cout, "conv2d bias size mismatch");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (ww + 2 * pad - kw) / stride + 1;
  check(ho > 0 && wo > 0, "conv2d empty output");
  int64_t kdim = (int64_t)cin * kh * kw, npix = (int64_t)ho * wo;
  MatRM col;
  im2col(x.data(), cin, h, ww, kh, kw, stride, pad, ho, wo, col);
  Eigen::ArrayXd out((int64_t)cout * npix);
  MapM om(out.data(), cout, npix);
  om = CMapM(w.data(), cout, kdim) * col;
  om.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data(), cout);
  auto n = make_node({cout, ho, wo}, std::move(out));
  attach(n, {x.node, w.node, b.node},
         [xn = x.node, wn = w.node, bn = b.node, cin, h, ww, cout, kh, kw, stride,
          pad, ho, wo, kdim, npix](TensorNode& o) {
           CMapM g(o.grad.data(), cout, npix);
           // im2col is cheap enough to redo; keeping it would pin large buffers.
           MatRM col2;
           im2col(xn->value.data(), cin, h, ww, kh, kw, stride, pad, ho, wo, col2);
           if (wn->requires_grad) {
             Eigen::ArrayXd gw(wn->value.size());
             MapM(gw.data(), cout, kdim) = g * col2.transpose();
             wn->accumulate(gw);
           }
           if (bn->requires_grad) {
             Eigen::ArrayXd gb(cout);
             Eigen::Map<Eigen::VectorXd>(gb.data(), cout) = g.rowwise().sum();
             bn->accumulate(gb);
           }
           if (xn->requires_grad) {
             MatRM gcol = CMapM(wn->value.data(), cout, kdim).transpose() * g;
             Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(xn->value.size());
             col2im(gcol, cin, h, ww, kh, kw, stride, pad, ho, wo, gx.data());
             xn->accumulate(gx);
           }
         });
  return Tensor(n);
}

Tensor avg_pool2(const Tensor& x) {
  check(x.shape().size() == 3 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
        "avg_pool2 wants even {C,H,W}");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  int ho = h / 2, wo = w / 2;
  Eigen::ArrayXd out((int64_t)c * ho * wo);
  const double* src = x.data();
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const double* p = src + ((int64_t)ch * h + 2 * oy) * w + 2 * ox;
        out[((int64_t)ch * ho + oy) * wo + ox] =
            0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  auto n = make_node({c, ho, wo}, std::move(out));
  attach(n, {x.node}, [xn = x.node, c, h, w, ho, wo](TensorNode& o) {
    Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(xn->value.size());
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double g = 0.25 * o.grad[((int64_t)ch * ho + oy) * wo + ox];
          double* p = gx.data() + ((int64_t)ch * h + 2 * oy) * w + 2 * ox;
          p[0] += g;
          p[1] += g;
          p[w] += g;
          p[w + 1] += g;
        }
    xn->accumulate(gx);
  });
  return Tensor(n);
}

LinearSamplePlan bilinear_plan(int in_size, int out_size) {
  LinearSamplePlan p;
  p.i0.resize(out_size);
  p.i1.resize(out_size);
  p.w1.resize(out_size);
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * (double)in_size / out_size - 0.5;
    if (src < 0) src = 0;
    if (src > in_size - 1) src = in_size - 1;
    int i0 = (int)std::floor(src);
    int i1 = std::min(i0 + 1, in_size - 1);
    p.i0[i] = i0;
    p.i1[i] = i1;
    p.w1[i] = src - i0;
  }
  return p;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  check(x.shape().size() == 3, "bilinear_resize wants {C,H,W}");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w) {
    auto n = make_node(x.shape(), x.raw());
    attach(n, {x.node}, [xn = x.node](TensorNode& o) { xn->accumulate(o.grad); });
    return Tensor(n);
  }
  auto py = std::make_shared<LinearSamplePlan>(bilinear_plan(h, out_h));
  auto px = std::make_shared<LinearSamplePlan>(bilinear_plan(w, out_w));
  Eigen::ArrayXd out((int64_t)c * out_h * out_w);
  const double* src = x.data();
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = src + (int64_t)ch * h * w;
    double* op = out.data() + (int64_t)ch * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      int y0 = py->i0[oy], y1 = py->i1[oy];
      double wy = py->w1[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        int x0 = px->i0[ox], x1 = px->i1[ox];
        double wx = px->w1[ox];
        double top = (1 - wx) * plane[(int64_t)y0 * w + x0] + wx * plane[(int64_t)y0 * w + x1];
        double bot = (1 - wx) * plane[(int64_t)y1 * w + x0] + wx * plane[(int64_t)y1 * w + x1];
        op[(int64_t)oy * out_w + ox] = (1 - wy) * top + wy * bot;
      }
    }
  }
  auto n = make_node({c, out_h, out_w}, std::move(out));
  attach(n, {x.node}, [xn = x.node, py, px, c, h, w, out_h, out_w](TensorNode& o) {
    Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(xn->value.size());
    for (int ch = 0; ch < c; ++ch) {
      double* gp = gx.data() + (int64_t)ch * h * w;
      const double* g = o.grad.data() + (int64_t)ch * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        int y0 = py->i0[oy], y1 = py->i1[oy];
        double wy = py->w1[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          int x0 = px->i0[ox], x1 = px->i1[ox];
          double wx = px->w1[ox];
          double gv = g[(int64_t)oy * out_w + ox];
          gp[(int64_t)y0 * w + x0] += (1 - wy) * (1 - wx) * gv;
          gp[(int64_t)y0 * w + x1] += (1 - wy) * wx * gv;
          gp[(int64_t)y1 * w + x0] += wy * (1 - wx) * gv;
          gp[(int64_t)y1 * w + x1] += wy * wx * gv;
        }
      }
    }
    xn->accumulate(gx);
  });
  return Tensor(n);
}

Tensor binarize(const Tensor& m, double thr) {
  Eigen::ArrayXd v = (m.raw() >= thr).cast<double>();
  return Tensor(make_node(m.shape(), std::move(v)));
}

}  // namespace fsvos
