#include "mstereo/random.hpp"

#include <cmath>

namespace mstereo {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on two fresh uniforms; u1 is kept away from zero.
  double u1 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double two_pi = 6.283185307179586476925286766559;
  spare_ = mag * std::sin(two_pi * u2);
  has_spare_ = true;
  return mag * std::cos(two_pi * u2);
}

namespace {

inline double lattice01(std::uint64_t key, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix64(key ^ splitmix64(static_cast<std::uint64_t>(ix) ^
                                                splitmix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

double value_noise(std::uint64_t key, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const std::int64_t iu = static_cast<std::int64_t>(fu);
  const std::int64_t iv = static_cast<std::int64_t>(fv);
  const double tu = smoothstep(u - fu);
  const double tv = smoothstep(v - fv);
  const double a = lattice01(key, iu, iv);
  const double b = lattice01(key, iu + 1, iv);
  const double c = lattice01(key, iu, iv + 1);
  const double d = lattice01(key, iu + 1, iv + 1);
  return (1.0 - tv) * ((1.0 - tu) * a + tu * b) + tv * ((1.0 - tu) * c + tu * d);
}

double value_noise3(std::uint64_t key, double u, double v, double w) {
  const double fw = std::floor(w);
  const std::int64_t iw = static_cast<std::int64_t>(fw);
  const double tw = smoothstep(w - fw);
  const std::uint64_t k0 = hash_mix(key, static_cast<std::uint64_t>(iw));
  const std::uint64_t k1 = hash_mix(key, static_cast<std::uint64_t>(iw + 1));
  return (1.0 - tw) * value_noise(k0, u, v) + tw * value_noise(k1, u, v);
}

double fractal_noise(std::uint64_t key, double u, double v, int octaves,
                     double persistence) {
  if (octaves < 1) octaves = 1;
  double sum = 0.0;
  double amp = 1.0;
  double norm = 0.0;
  double freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(hash_mix(key, static_cast<std::uint64_t>(o)), u * freq, v * freq);
    norm += amp;
    amp *= persistence;
    freq *= 2.0;
  }
  return sum / norm;
}

double fractal_noise3(std::uint64_t key, double u, double v, double w,
                      int octaves, double persistence) {
  if (octaves < 1) octaves = 1;
  double sum = 0.0;
  double amp = 1.0;
  double norm = 0.0;
  double freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise3(hash_mix(key, static_cast<std::uint64_t>(o)),
                              u * freq, v * freq, w * freq);
    norm += amp;
    amp *= persistence;
    freq *= 2.0;
  }
  return sum / norm;
}

}  // namespace mstereo
