#include "sepperm/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sepperm {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double Rng::gumbel() {
  constexpr double kEps = 1e-10;
  double u = uniform();
  if (u < kEps) u = kEps;
  if (u > 1.0 - kEps) u = 1.0 - kEps;
  return -std::log(-std::log(u));
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  if (u1 < 1e-12) u1 = 1e-12;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

int Rng::categorical(std::span<const double> weights) {
  if (weights.empty())
    throw std::invalid_argument("categorical: empty weight vector");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
    total += w;
  }
  if (total <= 0.0)
    throw std::invalid_argument("categorical: weights sum to zero");
  double u = uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size() - 1);
}

Rng Rng::split(std::uint64_t key) const {
  return Rng(splitmix64(splitmix64(base_seed_) ^ key));
}

}  // namespace sepperm
