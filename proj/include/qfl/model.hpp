#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "qfl/errors.hpp"
#include "qfl/parallel.hpp"
#include "qfl/rng.hpp"
#include "qfl/statevec.hpp"

namespace qfl {

/// Floor inside log() so empty bins at low shot counts stay finite.
inline constexpr double kEpsilonFloor = 1e-9;

/// Circuit shape plus training knobs for the quantum classifier.
struct ClassifierConfig {
    PqcArchitecture arch;
    int num_classes = 10;
    NoiseConfig noise;
    double grad_clip = 0.8;
    double learning_rate = 0.01;
    double grad_bound = 1.0; // bound B on |dloss/dexpectation|, accountant input
    int batch_size = 64;
    bool use_adam = false; // optimizer variant NOT covered by the privacy accountant

    void validate() const {
        if (arch.num_qubits < 1 || arch.num_qubits > kMaxQubits)
            throw ConfigError("num_qubits must be in [1, 14]");
        if (arch.num_layers < 1) throw ConfigError("num_layers must be positive");
        if (num_classes < 2 ||
            static_cast<std::size_t>(num_classes) > (std::size_t{1} << arch.num_qubits))
            throw ConfigError("num_classes must be in [2, 2^num_qubits]");
        if (grad_clip <= 0.0) throw ConfigError("grad_clip must be positive");
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be nonnegative");
        if (grad_bound <= 0.0) throw ConfigError("grad_bound must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
    }
};

struct LabeledExample {
    std::vector<double> features;
    int label = 0;
};

struct Gradient {
    std::vector<double> values;

    double norm() const {
        double sq = 0.0;
        for (double v : values) sq += v * v;
        return std::sqrt(sq);
    }
};

struct ForwardResult {
    std::vector<double> bin_masses; // q_c, one per class, summing to 1
    std::vector<double> logits;
    double loss = 0.0;
};

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

// ---------------------------------------------------------------------------
// Readout rule: class c collects the probability mass of basis states with
// index congruent to c modulo C; its logit is log(max(floor, q_c)).

/// Fold a 2^D basis distribution into C class masses.
inline std::vector<double> class_bin_reduce(std::span<const double> probs, int num_classes) {
    std::vector<double> q(num_classes, 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i)
        q[i % static_cast<std::size_t>(num_classes)] += probs[i];
    return q;
}

inline std::vector<double> bin_masses_to_logits(std::span<const double> bin_masses) {
    std::vector<double> logits(bin_masses.size());
    for (std::size_t c = 0; c < bin_masses.size(); ++c)
        logits[c] = std::log(std::max(kEpsilonFloor, bin_masses[c]));
    return logits;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> s(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        s[c] = std::exp(logits[c] - peak);
        sum += s[c];
    }
    for (double& v : s) v /= sum;
    return s;
}

/// Categorical cross-entropy of softmax(logits) against the label.
inline double cross_entropy_from_logits(std::span<const double> logits, int label) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - peak);
    return peak + std::log(sum) - logits[label];
}

// ---------------------------------------------------------------------------
// Forward pass.

/// Exact (or finite-shot sampled) class-bin masses for one example: encode,
/// run the circuit, depolarize the outcome distribution, then either read
/// the exact probabilities (INFINITE shots) or estimate them from one
/// seeded histogram.
inline std::vector<double> class_bin_masses(const LabeledExample& example,
                                            const PqcParams& params,
                                            const ClassifierConfig& cfg, std::uint64_t seed) {
    const Statevector encoded = encode_amplitude(example.features, cfg.arch.num_qubits);
    const Statevector out = apply_pqc(encoded, cfg.arch, params);
    std::vector<double> probs = basis_probabilities(out);
    const double p = cfg.noise.cumulative_p(cfg.arch.num_layers);
    if (p > 0.0) probs = apply_depolarizing(probs, p);
    if (!cfg.noise.infinite_shots())
        probs = sample_histogram(probs, cfg.noise.shots, seed).empirical_probabilities();
    return class_bin_reduce(probs, cfg.num_classes);
}

inline ForwardResult forward(const LabeledExample& example, const PqcParams& params,
                             const ClassifierConfig& cfg, std::uint64_t seed) {
    if (example.label < 0 || example.label >= cfg.num_classes)
        throw IndexOutOfRangeError("label " + std::to_string(example.label) +
                                   " outside [0, " + std::to_string(cfg.num_classes) + ")");
    ForwardResult r;
    r.bin_masses = class_bin_masses(example, params, cfg, seed);
    r.logits = bin_masses_to_logits(r.bin_masses);
    r.loss = cross_entropy_from_logits(r.logits, example.label);
    return r;
}

/// Argmax class (lowest index wins ties). Label is ignored.
inline int predict(const LabeledExample& example, const PqcParams& params,
                   const ClassifierConfig& cfg, std::uint64_t seed) {
    const auto q = class_bin_masses(example, params, cfg, seed);
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

// ---------------------------------------------------------------------------
// Gradients.

/// Parameter-shift gradient of the example loss.
///
/// The shift rule is exact for observable expectations, and each class
/// mass q_c is one (a projector expectation), so the gradient is assembled
/// as dloss/dw_d = sum_c (dloss/dq_c at w) * (q_c(w + pi/2 e_d) -
/// q_c(w - pi/2 e_d)) / 2. The outer factor is analytic:
/// (softmax_c - [c == y]) / q_c, zero where the log floor is active.
/// Costs 2P + 1 circuit evaluations; every evaluation draws fresh shot
/// noise from its own derived seed. With INFINITE shots and p = 0 the
/// result equals the analytic gradient of the loss.
inline Gradient parameter_shift_gradient(const LabeledExample& example, const PqcParams& params,
                                         const ClassifierConfig& cfg, std::uint64_t seed) {
    const ForwardResult base = forward(example, params, cfg, derive_seed(seed, 0));
    const std::vector<double> sm = softmax(base.logits);
    std::vector<double> coef(sm.size());
    for (std::size_t c = 0; c < sm.size(); ++c) {
        const double q = base.bin_masses[c];
        const double ds = sm[c] - (static_cast<int>(c) == example.label ? 1.0 : 0.0);
        coef[c] = q > kEpsilonFloor ? ds / q : 0.0;
    }

    constexpr double kShift = 1.57079632679489662; // pi/2
    Gradient g;
    g.values.assign(params.size(), 0.0);
    PqcParams shifted = params;
    for (std::size_t d = 0; d < params.size(); ++d) {
        shifted.values[d] = params.values[d] + kShift;
        const auto q_plus = class_bin_masses(example, shifted, cfg, derive_seed(seed, 2 * d + 1));
        shifted.values[d] = params.values[d] - kShift;
        const auto q_minus = class_bin_masses(example, shifted, cfg, derive_seed(seed, 2 * d + 2));
        shifted.values[d] = params.values[d];
        double acc = 0.0;
        for (std::size_t c = 0; c < coef.size(); ++c)
            acc += coef[c] * (q_plus[c] - q_minus[c]) / 2.0;
        g.values[d] = acc;
    }
    return g;
}

/// L2 clipping: rescale to norm C_clip when above it, pass through below.
inline Gradient clip_gradient(const Gradient& g, double clip) {
    const double n = g.norm();
    if (n <= clip) return g;
    Gradient out = g;
    const double scale = clip / n;
    for (double& v : out.values) v *= scale;
    return out;
}

// ---------------------------------------------------------------------------
// Local training.

/// Adam moment buffers; step counts from zero.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    static AdamState zeros(std::size_t size) {
        AdamState s;
        s.m.assign(size, 0.0);
        s.v.assign(size, 0.0);
        return s;
    }
};

namespace detail {

inline void apply_update(PqcParams& params, const std::vector<double>& mean_grad,
                         const ClassifierConfig& cfg, AdamState* adam) {
    if (!cfg.use_adam || adam == nullptr) {
        for (std::size_t d = 0; d < params.size(); ++d)
            params.values[d] -= cfg.learning_rate * mean_grad[d];
        return;
    }
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++adam->step;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam->step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam->step));
    for (std::size_t d = 0; d < params.size(); ++d) {
        adam->m[d] = kBeta1 * adam->m[d] + (1.0 - kBeta1) * mean_grad[d];
        adam->v[d] = kBeta2 * adam->v[d] + (1.0 - kBeta2) * mean_grad[d] * mean_grad[d];
        const double mhat = adam->m[d] / bc1;
        const double vhat = adam->v[d] / bc2;
        params.values[d] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + kEps);
    }
}

} // namespace detail

/// One epoch of minibatch descent over a shard: shuffle, then per batch
/// average the per-example CLIPPED gradients and take one step
/// w <- w - eta * mean. Per-example seeds depend only on (seed, batch,
/// slot), so results are identical at any worker count.
inline PqcParams local_epoch(std::span<const LabeledExample> shard, const PqcParams& params,
                             const ClassifierConfig& cfg, std::uint64_t seed,
                             AdamState* adam = nullptr, int workers = 1) {
    if (shard.empty()) throw EmptyShardError("local_epoch requires a nonempty shard");
    cfg.validate();

    Rng shuffle_rng(derive_seed(seed, 0));
    const std::vector<std::size_t> order = shuffled_indices(shard.size(), shuffle_rng);

    PqcParams current = params;
    const std::size_t num_batches =
        (shard.size() + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t b = 0; b < num_batches; ++b) {
        const std::size_t begin = b * static_cast<std::size_t>(cfg.batch_size);
        const std::size_t end = std::min(shard.size(), begin + cfg.batch_size);
        const std::uint64_t batch_seed = derive_seed(seed, 1 + b);

        std::vector<Gradient> grads(end - begin);
        parallel_for(end - begin, workers, [&](std::size_t slot) {
            const LabeledExample& ex = shard[order[begin + slot]];
            const Gradient g =
                parameter_shift_gradient(ex, current, cfg, derive_seed(batch_seed, slot));
            grads[slot] = clip_gradient(g, cfg.grad_clip);
        });

        std::vector<double> mean(current.size(), 0.0);
        for (const Gradient& g : grads)
            for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += g.values[d];
        const double inv = 1.0 / static_cast<double>(grads.size());
        for (double& v : mean) v *= inv;
        detail::apply_update(current, mean, cfg, adam);
    }
    return current;
}

/// Mean loss and accuracy over a labeled set (one forward per example).
inline EvalMetrics evaluate(std::span<const LabeledExample> examples, const PqcParams& params,
                            const ClassifierConfig& cfg, std::uint64_t seed) {
    if (examples.empty())
        throw EmptyEvaluationSetError("evaluate requires a nonempty example set");
    EvalMetrics m;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const ForwardResult r = forward(examples[i], params, cfg, derive_seed(seed, i));
        m.loss += r.loss;
        const auto peak = std::max_element(r.logits.begin(), r.logits.end());
        if (static_cast<int>(peak - r.logits.begin()) == examples[i].label) m.accuracy += 1.0;
    }
    m.loss /= static_cast<double>(examples.size());
    m.accuracy /= static_cast<double>(examples.size());
    return m;
}

} // namespace qfl
