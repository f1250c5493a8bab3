#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace sepperm {

// Seeded random stream. All draws are computed from raw mt19937_64 output
// with our own arithmetic (std::*_distribution is implementation-defined and
// would break byte-for-byte reproducibility across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return base_seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard Gumbel(0,1): -log(-log u) with u clamped to [eps, 1-eps],
  // eps = 1e-10, so the perturbation is always finite.
  double gumbel();

  // Standard normal via Box-Muller (deterministic, caches the spare value).
  double normal();

  // Index draw proportional to nonnegative linear weights.
  // Throws std::invalid_argument if the weights are empty or sum to zero.
  int categorical(std::span<const double> weights);

  // Integer in [0, n).
  int below(int n) {
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Derive an independent deterministic stream for substream `key`.
  Rng split(std::uint64_t key) const;

 private:
  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// In-place Fisher-Yates with our own index draws (std::shuffle is
// implementation-defined).
template <typename T>
void shuffle(std::span<T> xs, Rng& rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    std::size_t j = rng.next_u64() % i;
    std::swap(xs[i - 1], xs[j]);
  }
}

}  // namespace sepperm
