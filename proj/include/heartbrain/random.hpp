#pragma once

#include <cstdint>
#include <random>

namespace hb {

// Seeded generator with a platform-independent stream: std::mt19937_64 is
// bit-specified by the standard, and the uniform/normal/Poisson transforms
// below are implemented here rather than taken from <random> distributions,
// whose output differs between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on (0, 1].
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t poisson(double lambda);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child seed for stream `index` of a master seed (splitmix64).
  static std::uint64_t derive(std::uint64_t master, std::uint64_t index);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

struct GaussianDraw {
  double value;
  double eps;  // standard-normal draw; value = mu + sigma * eps
};

GaussianDraw gaussian_sample(Rng& rng, double mu, double sigma);

}  // namespace hb
