#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace tsgan {

// mt19937_64 with hand-rolled uniform/gaussian draws so streams are
// bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed), seed_lo_(seed) {}

  // Derives an independent stream, e.g. one per sample id (splitmix64 mixing).
  Rng fork(uint64_t stream) const {
    uint64_t z = seed_lo_ + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  uint64_t next_u64() { return engine_(); }

  double uniform() {  // [0,1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive range
    uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    return lo + static_cast<int64_t>(engine_() % span);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2;
    while (u1 == 0.0) u1 = uniform();
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::string save_state() const {
    std::ostringstream os;
    os << engine_ << " " << (has_spare_ ? 1 : 0) << " " << spare_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int spare_flag = 0;
    is >> engine_ >> spare_flag >> spare_;
    has_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 engine_;
  uint64_t seed_lo_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsgan
