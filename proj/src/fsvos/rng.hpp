#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fsvos {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled distributions so streams are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }

  // Independent child stream; tag picks which one.
  Rng child(uint64_t tag) const { return Rng(splitmix64(seed_ ^ splitmix64(tag))); }

  uint64_t u64() { return eng_(); }

  double uniform() { return (u64() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // [0, n)
  int64_t randint(int64_t n) { return (int64_t)(u64() % (uint64_t)n); }

  bool coin(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = (int64_t)v.size() - 1; i > 0; --i) {
      int64_t j = randint(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  // k distinct indices from [0, n), order randomized.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    shuffle(all);
    all.resize(k);
    return all;
  }

  std::string save_state() const {
    std::ostringstream os;
    os.precision(17);
    os << eng_ << " " << (has_spare_ ? 1 : 0) << " " << spare_ << " " << seed_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    int hs = 0;
    is >> hs >> spare_ >> seed_;
    has_spare_ = hs != 0;
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fsvos
