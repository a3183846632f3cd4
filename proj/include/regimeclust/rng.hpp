#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace regimeclust {

// Derives an independent generator from a root seed and a stream name,
// e.g. seed_stream(seed, "init/3") for the fourth restart. Adding new
// streams never perturbs existing ones.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);
std::mt19937_64 seed_stream(std::uint64_t seed, std::string_view name);

// Portable draws (the standard distributions are implementation-defined,
// which would break byte-reproducibility guarantees across toolchains).
double draw_uniform(std::mt19937_64& rng);                    // [0, 1)
double draw_normal(std::mt19937_64& rng);                     // N(0, 1)
int draw_categorical(std::mt19937_64& rng, const Eigen::VectorXd& weights);
std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n);  // [0, n)

}  // namespace regimeclust
