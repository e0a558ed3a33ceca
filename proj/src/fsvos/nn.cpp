#include "fsvos/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fsvos {

Tensor ParamStore::add(const std::string& name, const Shape& shape,
                       Eigen::ArrayXd init) {
  for (const auto& it : items_)
    if (it.first == name) throw std::runtime_error("duplicate param: " + name);
  Tensor t = leaf_param(shape, std::move(init));
  items_.emplace_back(name, t);
  return t;
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& it : items_)
    if (it.first == name) return &it.second;
  return nullptr;
}

void ParamStore::zero_grads() {
  for (auto& it : items_) it.second.zero_grad();
}

int64_t ParamStore::count_scalars() const {
  int64_t n = 0;
  for (const auto& it : items_) n += it.second.size();
  return n;
}

Eigen::ArrayXd kaiming_init(int64_t n, int64_t fan_in, Rng& rng) {
  double s = std::sqrt(2.0 / (double)fan_in);
  Eigen::ArrayXd v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = s * rng.normal();
  return v;
}

Conv2dLayer Conv2dLayer::make(ParamStore& ps, const std::string& name, int cin,
                              int cout, int k, int stride, int pad, Rng& rng) {
  Conv2dLayer l;
  l.w = ps.add(name + ".w", {cout, cin, k, k},
               kaiming_init((int64_t)cout * cin * k * k, (int64_t)cin * k * k, rng));
  l.b = ps.add(name + ".b", {cout}, Eigen::ArrayXd::Zero(cout));
  l.stride = stride;
  l.pad = pad;
  return l;
}

LinearLayer LinearLayer::make(ParamStore& ps, const std::string& name, int in,
                              int out, Rng& rng) {
  LinearLayer l;
  l.w = ps.add(name + ".w", {out, in}, kaiming_init((int64_t)out * in, in, rng));
  l.b = ps.add(name + ".b", {1, out}, Eigen::ArrayXd::Zero(out));
  return l;
}

Tensor LinearLayer::forward(const Tensor& x) const {
  return matmul_nt(x, w) + broadcast_rows(b, x.rows());
}

Mlp Mlp::make(ParamStore& ps, const std::string& name, int dim, Rng& rng) {
  Mlp m;
  m.l1 = LinearLayer::make(ps, name + ".l1", dim, dim, rng);
  m.l2 = LinearLayer::make(ps, name + ".l2", dim, dim, rng);
  return m;
}

Tensor Mlp::forward(const Tensor& x) const { return l2.forward(relu(l1.forward(x))); }

void Adam::step(ParamStore& params) {
  auto& items = const_cast<std::vector<std::pair<std::string, Tensor>>&>(params.items());
  if (m_.empty()) {
    m_.resize(items.size());
    v_.resize(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      m_[i] = Eigen::ArrayXd::Zero(items[i].second.size());
      v_[i] = Eigen::ArrayXd::Zero(items[i].second.size());
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, (double)t_);
  double bc2 = 1.0 - std::pow(beta2_, (double)t_);
  for (size_t i = 0; i < items.size(); ++i) {
    Tensor& p = items[i].second;
    if (!p.has_grad()) continue;  // parameter untouched by this graph
    const Eigen::ArrayXd& g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    p.raw() -= lr_ * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + eps_);
  }
}

void Adam::restore(int64_t t, std::vector<Eigen::ArrayXd> m,
                   std::vector<Eigen::ArrayXd> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace fsvos
