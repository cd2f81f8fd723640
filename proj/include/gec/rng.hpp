#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace gec {

// Counter-based generator. Every draw is a pure function of
// (seed, purpose, step, counter), so any named stream can be replayed
// independent of evaluation order.
class SplitRng {
public:
  SplitRng(uint64_t seed, std::string_view purpose, uint64_t step = 0)
      : key_(mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed, fnv1a(purpose)), step),
                 0xd1b54a32d192ed03ull)),
        counter_(0) {}

  SplitRng split(std::string_view purpose, uint64_t step = 0) const {
    return SplitRng(key_, purpose, step);
  }

  uint64_t next_u64() {
    ++counter_;
    return mix(key_ ^ (0xbf58476d1ce4e5b9ull * counter_), counter_);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

private:
  static uint64_t mix(uint64_t z, uint64_t salt) {
    z += 0x9e3779b97f4a7c15ull + salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_;
};

}  // namespace gec
