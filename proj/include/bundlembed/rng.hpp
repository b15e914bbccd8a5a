#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace bundlembed {

// Deterministic random source. The engine is mt19937_64, whose output is
// fixed by the standard; the distributions below are hand-rolled because the
// std:: ones are implementation-defined and differ across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n);

    // Box-Muller; one value per call, the pair partner is discarded.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Index drawn with probability proportional to weights[i]. Returns
    // weights.size() when every weight is zero.
    std::size_t weighted_index(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
};

Rng seeded_rng(std::uint64_t seed);

// Sub-seed for an independent stream keyed by (seed, id). splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

}  // namespace bundlembed
