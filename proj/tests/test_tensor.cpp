#include <doctest.h>

#include "fsvos/rng.hpp"
#include "fsvos/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace fsvos;

namespace {

// Central finite differences against backward() on a scalar projection of the
// op output. Each probe rebuilds the graph (graphs are single-use).
struct FdCheck {
  std::vector<Shape> shapes;
  std::function<Tensor(const std::vector<Tensor>&)> build;
  double lo = -1.0, hi = 1.0;
  double step = 1e-5, tol = 1e-4;
};

double run_scalar(const FdCheck& c, const std::vector<Eigen::ArrayXd>& vals,
                  const Eigen::ArrayXd& proj) {
  std::vector<Tensor> in;
  for (size_t i = 0; i < vals.size(); ++i) in.push_back(from_array(c.shapes[i], vals[i]));
  Tensor y = c.build(in);
  double s = 0;
  for (int64_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
  return s;
}

void fd_check(const FdCheck& c, Rng& rng) {
  std::vector<Eigen::ArrayXd> vals;
  for (const Shape& s : c.shapes) {
    Eigen::ArrayXd v(shape_size(s));
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(c.lo, c.hi);
    vals.push_back(v);
  }

  std::vector<Tensor> leaves;
  for (size_t i = 0; i < vals.size(); ++i)
    leaves.push_back(leaf_param(c.shapes[i], vals[i]));
  Tensor y = c.build(leaves);
  Eigen::ArrayXd proj(y.size());
  for (int64_t i = 0; i < proj.size(); ++i) proj[i] = rng.uniform(-1.0, 1.0);

  Tensor total = sum_all(mul(y, from_array(y.shape(), proj)));
  total.backward();

  for (size_t i = 0; i < leaves.size(); ++i) {
    REQUIRE(leaves[i].has_grad());
    for (int64_t j = 0; j < vals[i].size(); ++j) {
      std::vector<Eigen::ArrayXd> up = vals, dn = vals;
      up[i][j] += c.step;
      dn[i][j] -= c.step;
      double num = (run_scalar(c, up, proj) - run_scalar(c, dn, proj)) / (2 * c.step);
      double ana = leaves[i].grad()[j];
      double denom = std::max({1.0, std::abs(num), std::abs(ana)});
      CHECK(std::abs(num - ana) / denom <= c.tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise gradients") {
  Rng rng(11);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return add(t[0], t[1]); }}, rng);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return sub(t[0], t[1]); }}, rng);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return mul(t[0], t[1]); }}, rng);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return div(t[0], t[1]); }, 0.5, 1.5}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return add_scalar(t[0], 0.7); }}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return mul_scalar(t[0], -1.3); }}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return neg(t[0]); }}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return sigmoid(t[0]); }}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return exp_t(t[0]); }}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return log_t(t[0]); }, 0.2, 2.0}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return sqrt_t(t[0]); }, 0.2, 2.0}, rng);
  // keep clear of the kinks at 0 / clamp edges
  fd_check({{{2, 3}}, [](auto& t) { return relu(t[0]); }, 0.2, 1.0}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return relu(t[0]); }, -1.0, -0.2}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return abs_t(t[0]); }, 0.2, 1.0}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return abs_t(t[0]); }, -1.0, -0.2}, rng);
  fd_check({{{2, 3}}, [](auto& t) { return clamp(t[0], -2.0, 2.0); }}, rng);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return minimum(t[0], add_scalar(t[1], 5.0)); }}, rng);
  fd_check({{{2, 3}, {2, 3}}, [](auto& t) { return maximum(t[0], add_scalar(t[1], -5.0)); }}, rng);
}

TEST_CASE("clamp saturates gradient outside the range") {
  Tensor x = leaf_param({2, 1}, (Eigen::ArrayXd(2) << 3.0, 0.5).finished());
  sum_all(clamp(x, -1.0, 1.0)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("linear algebra and shape gradients") {
  Rng rng(12);
  fd_check({{{4, 2}, {2, 3}}, [](auto& t) { return matmul(t[0], t[1]); }}, rng);
  fd_check({{{4, 2}, {3, 2}}, [](auto& t) { return matmul_nt(t[0], t[1]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return transpose(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return reshape(t[0], {2, 4}); }}, rng);
  fd_check({{{2, 3}, {4, 3}}, [](auto& t) {
              return concat_rows(std::vector<Tensor>{t[0], t[1]});
            }},
           rng);
  fd_check({{{4, 2}, {4, 3}}, [](auto& t) { return concat_cols(t[0], t[1]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return slice_rows(t[0], 1, 2); }}, rng);
  fd_check({{{1, 3}}, [](auto& t) { return broadcast_rows(t[0], 4); }}, rng);
  fd_check({{{4, 2}, {4, 1}}, [](auto& t) { return scale_rows(t[0], t[1]); }}, rng);
  fd_check({{{3, 4, 2}}, [](auto& t) { return chw_to_mc(t[0]); }}, rng);
  fd_check({{{8, 3}}, [](auto& t) { return mc_to_chw(t[0], 4, 2); }}, rng);
}

TEST_CASE("reduction and normalization gradients") {
  Rng rng(13);
  fd_check({{{4, 2}}, [](auto& t) { return sum_all(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return mean_all(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return sum_rows(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return sum_cols(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return row_max(t[0]); }}, rng);
  fd_check({{{4, 2}}, [](auto& t) { return softmax_rows(t[0]); }}, rng);
  fd_check({{{5, 1}}, [](auto& t) { return minmax_norm(t[0]); }}, rng);
}

TEST_CASE("image op gradients") {
  Rng rng(14);
  fd_check({{{2, 4, 4}, {3, 2, 3, 3}, {3}}, [](auto& t) {
              return conv2d(t[0], t[1], t[2], 1, 1);
            }},
           rng);
  fd_check({{{2, 4, 4}, {3, 2, 3, 3}, {3}}, [](auto& t) {
              return conv2d(t[0], t[1], t[2], 2, 1);
            }},
           rng);
  fd_check({{{2, 4, 4}}, [](auto& t) { return avg_pool2(t[0]); }}, rng);
  fd_check({{{2, 3, 3}}, [](auto& t) { return bilinear_resize(t[0], 5, 7); }}, rng);
  fd_check({{{2, 4, 4}}, [](auto& t) { return bilinear_resize(t[0], 2, 2); }}, rng);
}

TEST_CASE("softmax rows are normalized") {
  Rng rng(15);
  Eigen::ArrayXd v(12);
  for (int i = 0; i < 12; ++i) v[i] = rng.uniform(-50.0, 50.0);
  Tensor y = softmax_rows(from_array({3, 4}, v));
  for (int r = 0; r < 3; ++r) {
    double s = 0;
    for (int c = 0; c < 4; ++c) {
      double p = y[r * 4 + c];
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("minmax_norm maps constant input to zeros") {
  Tensor y = minmax_norm(full({4, 1}, 2.5));
  for (int i = 0; i < 4; ++i) CHECK(y[i] == 0.0);

  Tensor z = minmax_norm(from_vector({3, 1}, {1.0, 3.0, 2.0}));
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 1.0);
  CHECK(z[2] == doctest::Approx(0.5));
}

TEST_CASE("row_max routes gradient to the first argmax on ties") {
  Tensor x = leaf_param({1, 3}, (Eigen::ArrayXd(3) << 2.0, 2.0, 1.0).finished());
  sum_all(row_max(x)).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("binarize thresholds and detaches") {
  Tensor x = leaf_param({4, 1}, (Eigen::ArrayXd(4) << 0.1, 0.5, 0.49, 0.9).finished());
  Tensor b = binarize(x);
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 1.0);  // threshold itself counts as foreground
  CHECK(b[2] == 0.0);
  CHECK(b[3] == 1.0);
  CHECK_FALSE(b.requires_grad());
}

TEST_CASE("chw_to_mc / mc_to_chw round-trip") {
  Rng rng(16);
  Eigen::ArrayXd v(3 * 2 * 4);
  for (int i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
  Tensor x = from_array({3, 2, 4}, v);
  Tensor rt = mc_to_chw(chw_to_mc(x), 2, 4);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(rt[i] == x[i]);
  // row r of the MC view is pixel r across channels
  Tensor mc = chw_to_mc(x);
  CHECK(mc.rows() == 8);
  CHECK(mc.cols() == 3);
  CHECK(mc[0 * 3 + 2] == x[2 * 8 + 0]);
  CHECK(mc[5 * 3 + 1] == x[1 * 8 + 5]);
}

TEST_CASE("shared subexpression accumulates gradient") {
  Tensor x = leaf_param({1, 1}, (Eigen::ArrayXd(1) << 3.0).finished());
  sum_all(add(x, x)).backward();
  CHECK(x.grad()[0] == 2.0);
}

TEST_CASE("NoGrad suspends recording") {
  Tensor x = leaf_param({2, 2}, Eigen::ArrayXd::Ones(4));
  {
    NoGrad ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  Tensor y = mul(x, x);
  CHECK(y.requires_grad());
}

TEST_CASE("detach cuts the graph") {
  Tensor x = leaf_param({1, 1}, (Eigen::ArrayXd(1) << 2.0).finished());
  Tensor y = mul(x.detach(), x);
  sum_all(y).backward();
  CHECK(x.grad()[0] == 2.0);  // only the non-detached path
}

TEST_CASE("bilinear identity resize is exact") {
  Rng rng(17);
  Eigen::ArrayXd v(2 * 3 * 5);
  for (int i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
  Tensor x = from_array({2, 3, 5}, v);
  Tensor y = bilinear_resize(x, 3, 5);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("matmul values against a hand loop") {
  Rng rng(18);
  Eigen::ArrayXd a(6), b(6);
  for (int i = 0; i < 6; ++i) a[i] = rng.uniform(-1, 1), b[i] = rng.uniform(-1, 1);
  Tensor ta = from_array({2, 3}, a), tb = from_array({3, 2}, b);
  Tensor y = matmul(ta, tb);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[r * 3 + k] * b[k * 2 + c];
      CHECK(y[r * 2 + c] == doctest::Approx(s).epsilon(1e-12));
    }
  Tensor tb2 = from_array({2, 3}, b);
  Tensor z = matmul_nt(ta, tb2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[r * 3 + k] * b[c * 3 + k];
      CHECK(z[r * 2 + c] == doctest::Approx(s).epsilon(1e-12));
    }
}
