#pragma once

#include <cstdint>

namespace mstereo {

// splitmix64 finalizer; the basis for all randomness in the project.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Small sequential generator. Distributions are implemented by hand so the
// stream is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Counter-based value noise: deterministic in (key, coordinates) so
// textured surfaces can be evaluated at any point, in any order, on any
// thread. The 3-D variant is seam-free on closed surfaces.
double value_noise(std::uint64_t key, double u, double v);
double value_noise3(std::uint64_t key, double u, double v, double w);

// Sum of `octaves` value-noise layers with halving amplitude and doubling
// frequency, normalized to [0, 1].
double fractal_noise(std::uint64_t key, double u, double v, int octaves,
                     double persistence = 0.65);
double fractal_noise3(std::uint64_t key, double u, double v, double w,
                      int octaves, double persistence = 0.65);

}  // namespace mstereo
