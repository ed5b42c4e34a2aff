#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace bevloc {

/// Deterministic random source. mt19937_64 is fully specified by the
/// standard; the distributions are hand-rolled because libstdc++'s
/// std::uniform_real_distribution / std::normal_distribution are
/// implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t bound = n * (UINT64_MAX / n);  // multiple of n
    uint64_t r;
    do {
      r = raw();
    } while (r >= bound);
    return r % n;
  }

  /// Gaussian via Box-Muller, one spare cached per pair.
  double normal(double mu, double sigma) {
    if (has_spare_) {
      has_spare_ = false;
      return mu + sigma * spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * 3.14159265358979323846 * u2);
    has_spare_ = true;
    return mu + sigma * mag * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  friend std::ostream& operator<<(std::ostream& os, const Rng& r) {
    os << r.gen_ << ' ' << (r.has_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << r.spare_;
    return os;
  }
  friend std::istream& operator>>(std::istream& is, Rng& r) {
    int spare_flag = 0;
    is >> r.gen_ >> spare_flag >> r.spare_;
    r.has_spare_ = spare_flag != 0;
    return is;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bevloc
