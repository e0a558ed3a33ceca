#pragma once

#include "fsvos/rng.hpp"
#include "fsvos/tensor.hpp"

#include <string>
#include <vector>

namespace fsvos {

// Named parameter registry. Registration order is the serialization and
// optimizer order, so it must be deterministic (no map iteration anywhere).
class ParamStore {
 public:
  Tensor add(const std::string& name, const Shape& shape, Eigen::ArrayXd init);
  Tensor* find(const std::string& name);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  void zero_grads();
  int64_t count_scalars() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

Eigen::ArrayXd kaiming_init(int64_t n, int64_t fan_in, Rng& rng);

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1, pad = 0;

  static Conv2dLayer make(ParamStore& ps, const std::string& name, int cin, int cout,
                          int k, int stride, int pad, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
  Tensor w;  // {out, in}
  Tensor b;  // {1, out}

  static LinearLayer make(ParamStore& ps, const std::string& name, int in, int out,
                          Rng& rng);
  Tensor forward(const Tensor& x) const;  // {M,in} -> {M,out}
};

// Two linear layers with a ReLU between; used for the prototype updates.
struct Mlp {
  LinearLayer l1, l2;

  static Mlp make(ParamStore& ps, const std::string& name, int dim, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

class Adam {
 public:
  Adam(double lr = 5e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // flat state, param-store order: per tensor m then v, plus step count
  int64_t step_count() const { return t_; }
  const std::vector<Eigen::ArrayXd>& m_state() const { return m_; }
  const std::vector<Eigen::ArrayXd>& v_state() const { return v_; }
  void restore(int64_t t, std::vector<Eigen::ArrayXd> m, std::vector<Eigen::ArrayXd> v);

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

}  // namespace fsvos
