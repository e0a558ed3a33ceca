#include "fsvos/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fsvos {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'V', 'O', 'S', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write((const char*)&v, 4); }
void put_i64(std::ostream& os, int64_t v) { os.write((const char*)&v, 8); }
void put_str(std::ostream& os, const std::string& s) {
  put_i64(os, (int64_t)s.size());
  os.write(s.data(), (std::streamsize)s.size());
}
void put_doubles(std::ostream& os, const std::vector<double>& v) {
  put_i64(os, (int64_t)v.size());
  os.write((const char*)v.data(), (std::streamsize)(v.size() * 8));
}

uint32_t get_u32(std::istream& is) {
  uint32_t v;
  is.read((char*)&v, 4);
  return v;
}
int64_t get_i64(std::istream& is) {
  int64_t v;
  is.read((char*)&v, 8);
  return v;
}
std::string get_str(std::istream& is) {
  int64_t n = get_i64(is);
  if (n < 0 || n > (1 << 28)) throw std::runtime_error("corrupt checkpoint string");
  std::string s((size_t)n, '\0');
  is.read(s.data(), n);
  return s;
}
std::vector<double> get_doubles(std::istream& is) {
  int64_t n = get_i64(is);
  if (n < 0 || n > (int64_t)1 << 32) throw std::runtime_error("corrupt checkpoint array");
  std::vector<double> v((size_t)n);
  is.read((char*)v.data(), n * 8);
  return v;
}

}  // namespace

const CheckpointData::Group* CheckpointData::find_group(
    const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& d) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_str(os, d.config_text);
  put_i64(os, d.epoch);

  put_u32(os, (uint32_t)d.groups.size());
  for (const auto& g : d.groups) {
    put_str(os, g.name);
    put_u32(os, (uint32_t)g.tensors.size());
    for (const auto& t : g.tensors) {
      put_str(os, t.name);
      put_u32(os, (uint32_t)t.shape.size());
      for (int dim : t.shape) put_u32(os, (uint32_t)dim);
      put_doubles(os, t.values);
    }
    put_i64(os, g.adam_t);
    if (g.adam_m.size() != g.tensors.size() && !g.adam_m.empty())
      throw std::runtime_error("optimizer state count mismatch");
    put_u32(os, (uint32_t)g.adam_m.size());
    for (const auto& m : g.adam_m) put_doubles(os, m);
    put_u32(os, (uint32_t)g.adam_v.size());
    for (const auto& v : g.adam_v) put_doubles(os, v);
  }

  put_u32(os, (uint32_t)d.rng_states.size());
  for (const auto& [k, v] : d.rng_states) {
    put_str(os, k);
    put_str(os, v);
  }
  if (!os) throw std::runtime_error("failed while writing " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + " is not a checkpoint file");
  uint32_t ver = get_u32(is);
  if (ver != kVersion)
    throw std::runtime_error("checkpoint version " + std::to_string(ver) +
                             " not supported (expected " +
                             std::to_string(kVersion) + ")");

  CheckpointData d;
  d.config_text = get_str(is);
  d.epoch = get_i64(is);

  uint32_t ngroups = get_u32(is);
  for (uint32_t gi = 0; gi < ngroups; ++gi) {
    CheckpointData::Group g;
    g.name = get_str(is);
    uint32_t nt = get_u32(is);
    for (uint32_t ti = 0; ti < nt; ++ti) {
      CheckpointData::TensorEntry t;
      t.name = get_str(is);
      uint32_t nd = get_u32(is);
      for (uint32_t di = 0; di < nd; ++di) t.shape.push_back((int)get_u32(is));
      t.values = get_doubles(is);
      g.tensors.push_back(std::move(t));
    }
    g.adam_t = get_i64(is);
    uint32_t nm = get_u32(is);
    for (uint32_t i = 0; i < nm; ++i) g.adam_m.push_back(get_doubles(is));
    uint32_t nv = get_u32(is);
    for (uint32_t i = 0; i < nv; ++i) g.adam_v.push_back(get_doubles(is));
    d.groups.push_back(std::move(g));
  }

  uint32_t nr = get_u32(is);
  for (uint32_t i = 0; i < nr; ++i) {
    std::string k = get_str(is);
    std::string v = get_str(is);
    d.rng_states.emplace_back(std::move(k), std::move(v));
  }
  if (!is) throw std::runtime_error("truncated checkpoint " + path);
  return d;
}

CheckpointData::Group pack_group(const std::string& name, const ParamStore& ps,
                                 const Adam* opt) {
  CheckpointData::Group g;
  g.name = name;
  for (const auto& [pname, t] : ps.items()) {
    CheckpointData::TensorEntry e;
    e.name = pname;
    e.shape = t.shape();
    const double* d = t.node->value.data();
    e.values.assign(d, d + t.size());
    g.tensors.push_back(std::move(e));
  }
  if (opt) {
    g.adam_t = opt->step_count();
    for (const auto& m : opt->m_state())
      g.adam_m.emplace_back(m.data(), m.data() + m.size());
    for (const auto& v : opt->v_state())
      g.adam_v.emplace_back(v.data(), v.data() + v.size());
    g.adam_m.resize(ps.items().size());
    g.adam_v.resize(ps.items().size());
  }
  return g;
}

void unpack_group(const CheckpointData::Group& g, ParamStore& ps, Adam* opt) {
  auto& items = ps.items();
  if (g.tensors.size() != items.size())
    throw std::runtime_error("checkpoint group '" + g.name + "' has " +
                             std::to_string(g.tensors.size()) +
                             " tensors, model expects " +
                             std::to_string(items.size()));
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& e = g.tensors[i];
    Tensor t = items[i].second;
    if (e.name != items[i].first)
      throw std::runtime_error("checkpoint tensor '" + e.name +
                               "' does not match model parameter '" +
                               items[i].first + "'");
    if (e.shape != t.shape() || (int64_t)e.values.size() != t.size())
      throw std::runtime_error("checkpoint tensor '" + e.name + "' shape mismatch");
    std::copy(e.values.begin(), e.values.end(), t.node->value.data());
  }
  if (opt) {
    std::vector<Eigen::ArrayXd> m, v;
    for (const auto& arr : g.adam_m) {
      Eigen::ArrayXd a(arr.size());
      std::copy(arr.begin(), arr.end(), a.data());
      m.push_back(std::move(a));
    }
    for (const auto& arr : g.adam_v) {
      Eigen::ArrayXd a(arr.size());
      std::copy(arr.begin(), arr.end(), a.data());
      v.push_back(std::move(a));
    }
    opt->restore(g.adam_t, std::move(m), std::move(v));
  }
}

}  // namespace fsvos
