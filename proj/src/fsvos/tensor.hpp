#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace fsvos {

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);

struct TensorNode {
  Shape shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;  // empty until first accumulation
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(const Eigen::ArrayXd& g);
};

// Reverse-mode autodiff handle. Value semantics on the handle, shared node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node(std::move(n)) {}

  bool defined() const { return node != nullptr; }
  const Shape& shape() const { return node->shape; }
  int dim(int i) const { return node->shape[i]; }
  int rows() const { return node->shape[0]; }
  int cols() const { return node->shape[1]; }
  int64_t size() const { return node->value.size(); }

  double* data() { return node->value.data(); }
  const double* data() const { return node->value.data(); }
  double operator[](int64_t i) const { return node->value[i]; }
  double scalar() const { return node->value[0]; }

  Eigen::ArrayXd& raw() { return node->value; }
  const Eigen::ArrayXd& raw() const { return node->value; }
  const Eigen::ArrayXd& grad() const { return node->grad; }
  bool has_grad() const { return node->grad.size() > 0; }

  bool requires_grad() const { return node->requires_grad; }

  Tensor detach() const;
  void backward() const;
  void zero_grad() { node->grad.resize(0); }

  std::shared_ptr<TensorNode> node;
};

// Gradient recording is on by default; NoGrad suspends it for a scope.
bool grad_enabled();
struct NoGrad {
  NoGrad();
  ~NoGrad();
  bool prev;
};

// ---- construction ----
Tensor zeros(const Shape& shape);
Tensor full(const Shape& shape, double v);
Tensor from_vector(const Shape& shape, const std::vector<double>& data);
Tensor from_array(const Shape& shape, Eigen::ArrayXd data);
Tensor leaf_param(const Shape& shape, Eigen::ArrayXd data);  // requires_grad

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- linear algebra (2-d, row-major) ----
Tensor matmul(const Tensor& a, const Tensor& b);     // {m,k} x {k,n}
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // {m,k} x {n,k}^T -> {m,n}
Tensor transpose(const Tensor& a);

// ---- shape ops ----
Tensor reshape(const Tensor& a, const Shape& shape);  // same element count/order
Tensor concat_rows(const std::vector<Tensor>& ts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int begin, int count);
Tensor broadcast_rows(const Tensor& v, int m);      // {1,C} -> {m,C}
Tensor scale_rows(const Tensor& a, const Tensor& s);  // {M,C} * {M,1} per-row
Tensor chw_to_mc(const Tensor& x);  // {C,H,W} -> {H*W, C}
Tensor mc_to_chw(const Tensor& x, int h, int w);  // {h*w, C} -> {C,h,w}

// ---- reductions ----
Tensor sum_all(const Tensor& a);   // -> {1}
Tensor mean_all(const Tensor& a);  // -> {1}
Tensor sum_rows(const Tensor& a);  // {M,C} -> {1,C}
Tensor sum_cols(const Tensor& a);  // {M,C} -> {M,1}
Tensor row_max(const Tensor& a);   // {M,C} -> {M,1}, subgradient to first argmax

// ---- activations over rows ----
Tensor softmax_rows(const Tensor& a);

// (v - min) / (max - min) on a column; exactly-constant input maps to zeros.
Tensor minmax_norm(const Tensor& v);

// ---- image ops ({C,H,W} layout) ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor avg_pool2(const Tensor& x);
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

// Non-differentiable threshold; detached output in {0,1} (v >= thr).
Tensor binarize(const Tensor& m, double thr = 0.5);

// Plan for separable bilinear interpolation (half-pixel convention), shared
// between the graph op and plain image utilities.
struct LinearSamplePlan {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};
LinearSamplePlan bilinear_plan(int in_size, int out_size);

}  // namespace fsvos
