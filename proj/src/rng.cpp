#include "regimeclust/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace regimeclust {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : text) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ fnv1a(name));
}

std::mt19937_64 seed_stream(std::uint64_t seed, std::string_view name) {
  return std::mt19937_64(derive_seed(seed, name));
}

double draw_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double draw_normal(std::mt19937_64& rng) {
  // Box-Muller; the first uniform is kept away from zero.
  double u1 = 0.0;
  do {
    u1 = draw_uniform(rng);
  } while (u1 <= 0.0);
  const double u2 = draw_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int draw_categorical(std::mt19937_64& rng, const Eigen::VectorXd& weights) {
  const double total = weights.sum();
  if (!(total > 0.0)) {
    throw std::invalid_argument("draw_categorical: weights must have positive sum");
  }
  const double u = draw_uniform(rng) * total;
  double cum = 0.0;
  const int n = static_cast<int>(weights.size());
  for (int k = 0; k < n; ++k) {
    cum += weights[k];
    if (u < cum) return k;
  }
  return n - 1;
}

std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("draw_index: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

}  // namespace regimeclust
