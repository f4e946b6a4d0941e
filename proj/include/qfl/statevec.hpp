#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qfl/errors.hpp"
#include "qfl/rng.hpp"

namespace qfl {

using cplx = std::complex<double>;

inline constexpr int kMaxQubits = 14;

/// Sentinel shot count: exact expectation values, no sampling.
inline constexpr std::uint64_t kInfiniteShots = 0;

/// Pure quantum state over `num_qubits` qubits, stored as 2^D complex
/// amplitudes in the computational basis.
///
/// Index convention: qubit 0 is the MOST significant bit of the basis
/// index. For D = 2, index 1 is |01> (qubit 0 in |0>, qubit 1 in |1>).
/// Everything that addresses qubits (Z expectations, CNOT wiring) follows
/// this convention.
struct Statevector {
    int num_qubits = 0;
    std::vector<cplx> amplitudes;

    Statevector() = default;

    /// |0...0> on `qubits` qubits.
    explicit Statevector(int qubits) : num_qubits(qubits) {
        if (qubits < 1 || qubits > kMaxQubits)
            throw DimensionTooLargeError("num_qubits must be in [1, " +
                                         std::to_string(kMaxQubits) + "], got " +
                                         std::to_string(qubits));
        amplitudes.assign(std::size_t{1} << qubits, cplx(0.0, 0.0));
        amplitudes[0] = cplx(1.0, 0.0);
    }

    std::size_t dim() const { return amplitudes.size(); }

    double norm() const {
        double s = 0.0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return std::sqrt(s);
    }

    /// Bit of qubit `q` inside basis index `i` (MSB-first convention).
    int qubit_bit(std::size_t i, int q) const {
        return static_cast<int>((i >> (num_qubits - 1 - q)) & 1u);
    }
};

/// Trainable circuit layout: L layers, each applying Rx, Ry, Rz to every
/// qubit (qubit-major order) followed by CNOTs on adjacent pairs
/// (control i, target i+1, i ascending). The CNOT ladder is structural:
/// it is applied even when all rotation angles are zero.
struct PqcArchitecture {
    int num_qubits = 0;
    int num_layers = 0;

    std::size_t num_parameters() const {
        return static_cast<std::size_t>(num_layers) * num_qubits * 3;
    }
};

/// Rotation angles in radians, indexed (layer, qubit, axis) with
/// axis 0 = Rx, 1 = Ry, 2 = Rz.
struct PqcParams {
    int num_layers = 0;
    int num_qubits = 0;
    std::vector<double> values;

    static PqcParams zeros(const PqcArchitecture& arch) {
        PqcParams p;
        p.num_layers = arch.num_layers;
        p.num_qubits = arch.num_qubits;
        p.values.assign(arch.num_parameters(), 0.0);
        return p;
    }

    /// Seeded uniform [-pi, pi) initialization.
    static PqcParams random_init(const PqcArchitecture& arch, std::uint64_t seed) {
        PqcParams p = zeros(arch);
        Rng rng(seed);
        for (auto& v : p.values) v = rng.uniform(-3.14159265358979323846, 3.14159265358979323846);
        return p;
    }

    std::size_t size() const { return values.size(); }

    double& at(int layer, int qubit, int axis) {
        return values[(static_cast<std::size_t>(layer) * num_qubits + qubit) * 3 + axis];
    }
    double at(int layer, int qubit, int axis) const {
        return values[(static_cast<std::size_t>(layer) * num_qubits + qubit) * 3 + axis];
    }

    bool matches(const PqcArchitecture& arch) const {
        return num_layers == arch.num_layers && num_qubits == arch.num_qubits &&
               values.size() == arch.num_parameters();
    }
};

/// Cumulative depolarizing probability after L noisy layers with uniform
/// per-layer error rate lambda: p = 1 - (1 - lambda)^L.
inline double cumulative_depolarizing_p(double lambda, int num_layers) {
    return 1.0 - std::pow(1.0 - lambda, num_layers);
}

/// Measurement-variance scaling induced by the depolarizing channel:
/// c(p) = 1 - (1 - p)^2.
inline double variance_scaling_c(double p) {
    const double q = 1.0 - p;
    return 1.0 - q * q;
}

/// Measurement-noise knobs: finite shot count M (or kInfiniteShots for
/// exact expectations) and per-gate depolarizing rate lambda.
///
/// lambda is clamped from below at lambda_min, approximating the
/// irreducible hardware error rate; set allow_noiseless to disable the
/// floor (intended for exactness tests only).
struct NoiseConfig {
    std::uint64_t shots = kInfiniteShots;
    double lambda = 0.001;
    double lambda_min = 0.001;
    bool allow_noiseless = false;

    bool infinite_shots() const { return shots == kInfiniteShots; }

    double effective_lambda() const {
        return allow_noiseless ? lambda : std::max(lambda, lambda_min);
    }

    double cumulative_p(int num_layers) const {
        return cumulative_depolarizing_p(effective_lambda(), num_layers);
    }

    static NoiseConfig noiseless() {
        NoiseConfig n;
        n.shots = kInfiniteShots;
        n.lambda = 0.0;
        n.allow_noiseless = true;
        return n;
    }

    static NoiseConfig finite(std::uint64_t shots, double lambda) {
        NoiseConfig n;
        n.shots = shots;
        n.lambda = lambda;
        return n;
    }
};

/// Counts per basis state from M measurement shots.
struct MeasurementHistogram {
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    std::vector<double> empirical_probabilities() const {
        std::vector<double> p(counts.size());
        const double inv = total ? 1.0 / static_cast<double>(total) : 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i)
            p[i] = static_cast<double>(counts[i]) * inv;
        return p;
    }
};

// ---------------------------------------------------------------------------
// Gate kernels (in place).

namespace detail {

/// Apply a 2x2 unitary to one qubit. Stride picks out the amplitude pairs
/// that differ only in that qubit's bit.
inline void apply_single_qubit(Statevector& state, int qubit, cplx u00, cplx u01,
                               cplx u10, cplx u11) {
    const std::size_t stride = std::size_t{1} << (state.num_qubits - 1 - qubit);
    const std::size_t dim = state.dim();
    for (std::size_t base = 0; base < dim; base += 2 * stride) {
        for (std::size_t i = base; i < base + stride; ++i) {
            const cplx a0 = state.amplitudes[i];
            const cplx a1 = state.amplitudes[i + stride];
            state.amplitudes[i] = u00 * a0 + u01 * a1;
            state.amplitudes[i + stride] = u10 * a0 + u11 * a1;
        }
    }
}

} // namespace detail

inline void apply_rx(Statevector& state, int qubit, double theta) {
    const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
    detail::apply_single_qubit(state, qubit, cplx(c, 0), cplx(0, -s), cplx(0, -s), cplx(c, 0));
}

inline void apply_ry(Statevector& state, int qubit, double theta) {
    const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
    detail::apply_single_qubit(state, qubit, cplx(c, 0), cplx(-s, 0), cplx(s, 0), cplx(c, 0));
}

inline void apply_rz(Statevector& state, int qubit, double theta) {
    const cplx e0 = std::polar(1.0, -theta / 2.0);
    const cplx e1 = std::polar(1.0, theta / 2.0);
    detail::apply_single_qubit(state, qubit, e0, cplx(0, 0), cplx(0, 0), e1);
}

inline void apply_cnot(Statevector& state, int control, int target) {
    const std::size_t cm = std::size_t{1} << (state.num_qubits - 1 - control);
    const std::size_t tm = std::size_t{1} << (state.num_qubits - 1 - target);
    const std::size_t dim = state.dim();
    for (std::size_t i = 0; i < dim; ++i)
        if ((i & cm) && !(i & tm)) std::swap(state.amplitudes[i], state.amplitudes[i | tm]);
}

// ---------------------------------------------------------------------------
// Operations.

/// Amplitude-encode a feature vector: a_i = f_i / ||f||_2, zero padded up
/// to 2^D. Throws ZeroVectorError when ||f||_2 < 1e-12 and
/// DimensionTooLargeError when the vector does not fit in D qubits.
inline Statevector encode_amplitude(std::span<const double> features, int num_qubits) {
    Statevector state(num_qubits);
    if (features.size() > state.dim())
        throw DimensionTooLargeError("feature vector of length " +
                                     std::to_string(features.size()) + " exceeds 2^" +
                                     std::to_string(num_qubits) + " amplitudes");
    double sq = 0.0;
    for (double f : features) sq += f * f;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw ZeroVectorError("cannot amplitude-encode a zero vector");
    state.amplitudes[0] = cplx(0.0, 0.0);
    for (std::size_t i = 0; i < features.size(); ++i)
        state.amplitudes[i] = cplx(features[i] / norm, 0.0);
    return state;
}

/// Run the full circuit: per layer, Rx/Ry/Rz on every qubit then the CNOT
/// ladder. Returns a new state; the input is untouched.
inline Statevector apply_pqc(const Statevector& state, const PqcArchitecture& arch,
                             const PqcParams& params) {
    if (state.num_qubits != arch.num_qubits)
        throw ShapeMismatchError("state has " + std::to_string(state.num_qubits) +
                                 " qubits, architecture expects " +
                                 std::to_string(arch.num_qubits));
    if (!params.matches(arch))
        throw ShapeMismatchError("parameter tensor does not match architecture (" +
                                 std::to_string(params.size()) + " values, expected " +
                                 std::to_string(arch.num_parameters()) + ")");
    Statevector out = state;
    for (int layer = 0; layer < arch.num_layers; ++layer) {
        for (int q = 0; q < arch.num_qubits; ++q) {
            apply_rx(out, q, params.at(layer, q, 0));
            apply_ry(out, q, params.at(layer, q, 1));
            apply_rz(out, q, params.at(layer, q, 2));
        }
        for (int q = 0; q + 1 < arch.num_qubits; ++q) apply_cnot(out, q, q + 1);
    }
    return out;
}

/// <Z_qubit> = sum_i (+-1) |a_i|^2, sign +1 when the qubit's bit is 0.
inline double expectation_z(const Statevector& state, int qubit) {
    if (qubit < 0 || qubit >= state.num_qubits)
        throw IndexOutOfRangeError("qubit index " + std::to_string(qubit) +
                                   " out of range for " + std::to_string(state.num_qubits) +
                                   " qubits");
    double e = 0.0;
    for (std::size_t i = 0; i < state.dim(); ++i)
        e += (state.qubit_bit(i, qubit) ? -1.0 : 1.0) * std::norm(state.amplitudes[i]);
    return e;
}

/// Same Z expectation read off a probability vector of length 2^D.
inline double expectation_z_from_probabilities(std::span<const double> probs, int qubit,
                                               int num_qubits) {
    double e = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const int bit = static_cast<int>((i >> (num_qubits - 1 - qubit)) & 1u);
        e += (bit ? -1.0 : 1.0) * probs[i];
    }
    return e;
}

/// Exact basis-state distribution p_i = |a_i|^2.
inline std::vector<double> basis_probabilities(const Statevector& state) {
    std::vector<double> p(state.dim());
    for (std::size_t i = 0; i < state.dim(); ++i) p[i] = std::norm(state.amplitudes[i]);
    return p;
}

namespace detail {

inline void check_distribution(std::span<const double> probs) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= -1e-12) || !std::isfinite(p))
            throw InvalidProbabilityError("probability entries must be nonnegative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InvalidProbabilityError("probabilities sum to " + std::to_string(sum) +
                                      ", expected 1");
}

} // namespace detail

/// End-of-circuit depolarizing channel on the measurement distribution:
/// (1 - p) * probs + p * uniform. For any traceless observable this scales
/// the expectation by (1 - p).
inline std::vector<double> apply_depolarizing(std::span<const double> probs, double p) {
    detail::check_distribution(probs);
    if (p < 0.0 || p > 1.0)
        throw InvalidProbabilityError("depolarizing probability must be in [0, 1], got " +
                                      std::to_string(p));
    const double uniform = p / static_cast<double>(probs.size());
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = (1.0 - p) * probs[i] + uniform;
    return out;
}

/// Draw `shots` basis states from `probs` (inverse-CDF with an explicit
/// binary search, so the draw sequence depends only on the seed).
inline MeasurementHistogram sample_histogram(std::span<const double> probs,
                                             std::uint64_t shots, std::uint64_t rng_seed) {
    detail::check_distribution(probs);
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    cdf.back() = 1.0;

    MeasurementHistogram hist;
    hist.counts.assign(probs.size(), 0);
    hist.total = shots;
    Rng rng(rng_seed);
    for (std::uint64_t s = 0; s < shots; ++s) {
        const double u = rng.uniform();
        std::size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < cdf[mid])
                hi = mid;
            else
                lo = mid + 1;
        }
        ++hist.counts[lo];
    }
    return hist;
}

} // namespace qfl
