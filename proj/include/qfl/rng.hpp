#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace qfl {

namespace detail {

// SplitMix64 finalizer (Steele et al.), the usual choice for seed mixing.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Derive a child seed from a parent seed and one stream index.
/// The scheme is splittable: derive_seed(derive_seed(s, a), b) gives an
/// independent stream per (a, b) path, so parallel tasks can be seeded
/// without any shared RNG state.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return detail::splitmix64(parent ^ detail::splitmix64(index + 1));
}

inline std::uint64_t derive_seed(std::uint64_t parent,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = parent;
    for (auto idx : path) s = derive_seed(s, idx);
    return s;
}

/// Deterministic RNG with explicit, implementation-independent draw
/// functions. Identical seeds give identical streams on every platform,
/// which the reproducibility contracts rely on.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        // Modulo with a 64-bit engine; bias is < 2^-53 for any n used here.
        return engine_() % n;
    }

    /// One standard normal draw (Box-Muller, no cached state).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::mt19937_64 engine_;
};

/// In-place Fisher-Yates shuffle with an explicit draw order, so the
/// permutation depends only on the seed, not on the standard library.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Seeded identity permutation of {0, .., n-1}.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx, rng);
    return idx;
}

} // namespace qfl
