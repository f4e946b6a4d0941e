#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qfl/errors.hpp"
#include "qfl/fed.hpp"
#include "qfl/format.hpp"
#include "qfl/model.hpp"
#include "qfl/rng.hpp"

namespace qfl {

/// The only view of the victim an attacker gets: label + confidence per
/// query. Parameters live in a private member with no accessor, so attack
/// code cannot compile against them.
class VictimOracle {
  public:
    struct Response {
        int label = 0;
        double confidence = 0.0;
    };

    VictimOracle(PqcParams params, ClassifierConfig cfg, std::string tag)
        : params_(std::move(params)), cfg_(std::move(cfg)), tag_(std::move(tag)) {
        cfg_.noise.shots = kInfiniteShots; // deterministic answers per query
        cfg_.validate();
        if (!params_.matches(cfg_.arch))
            throw ShapeMismatchError("victim parameters do not match the declared architecture");
    }

    static VictimOracle from_checkpoint(const Checkpoint& ck, const NoiseConfig& noise,
                                        std::string tag) {
        ClassifierConfig cfg;
        cfg.arch = {ck.params.num_qubits, ck.params.num_layers};
        cfg.num_classes = ck.num_classes;
        cfg.noise = noise;
        return VictimOracle(ck.params, std::move(cfg), std::move(tag));
    }

    Response query(std::span<const double> features) const {
        LabeledExample probe{std::vector<double>(features.begin(), features.end()), 0};
        const auto q = class_bin_masses(probe, params_, cfg_, 0);
        const auto sm = softmax(bin_masses_to_logits(q));
        const auto peak = std::max_element(sm.begin(), sm.end());
        return {static_cast<int>(peak - sm.begin()), *peak};
    }

    int num_classes() const { return cfg_.num_classes; }
    int max_feature_dim() const { return 1 << cfg_.arch.num_qubits; }
    const std::string& tag() const { return tag_; }

  private:
    PqcParams params_;
    ClassifierConfig cfg_;
    std::string tag_;
};

// The black-box contract, checked at compile time: no parameter access of
// any spelling is visible on the oracle.
template <typename T>
concept ExposesParameters = requires(const T& t) { t.params(); } ||
                            requires(const T& t) { t.parameters(); } ||
                            requires(const T& t) { t.params_; };
static_assert(!ExposesParameters<VictimOracle>);

/// Attacker-side settings.
struct AttackConfig {
    int num_queries = 1000;
    PqcArchitecture substitute_arch; // defaults to the victim's shape in run_attack
    int substitute_epochs = 10;
    double substitute_lr = 0.1;
    int substitute_batch = 16;
    std::vector<double> noise_strengths{0.12, 0.14, 0.16, 0.18, 0.20};
    std::uint64_t seed = 1;

    void validate(int num_classes) const {
        if (num_queries < num_classes)
            throw ConfigError("num_queries must be at least the class count");
        for (double e : noise_strengths)
            if (e < 0.0) throw ConfigError("noise strengths must be nonnegative");
        if (noise_strengths.empty()) throw ConfigError("noise strength list must be nonempty");
    }
};

/// One perturbed input with the victim's verdicts on both versions.
struct AdvExample {
    LabeledExample original;              // true label kept for scoring
    std::vector<double> perturbed;
    double noise_strength = 0.0;
    int victim_label_before = 0;
    int victim_label_after = 0;
    double victim_confidence_after = 0.0;
};

/// Robustness numbers for one noise strength.
struct AttackMetrics {
    double noise_strength = 0.0;
    double adv_accuracy = 0.0;             // vs true labels
    double mean_confidence_correct = 0.0;  // victim confidence on the correct subset
    double asr = 0.0;                      // 1 - adv_accuracy (untargeted)
};

// ---------------------------------------------------------------------------
// Query phase.

/// Label a query set through the oracle. Features come from the supplied
/// pool (cycled when Q exceeds it) or uniform [0,1]^d draws when no pool
/// is given.
inline std::vector<LabeledExample> build_query_set(const VictimOracle& victim, int num_queries,
                                                   std::span<const LabeledExample> pool,
                                                   int feature_dim, std::uint64_t seed) {
    std::vector<LabeledExample> queries;
    queries.reserve(static_cast<std::size_t>(num_queries));
    Rng rng(seed);
    for (int i = 0; i < num_queries; ++i) {
        LabeledExample q;
        if (pool.empty()) {
            q.features.resize(static_cast<std::size_t>(feature_dim));
            for (auto& v : q.features) v = rng.uniform();
        } else {
            q.features = pool[rng.uniform_index(pool.size())].features;
        }
        q.label = victim.query(q.features).label;
        queries.push_back(std::move(q));
    }
    return queries;
}

// ---------------------------------------------------------------------------
// Substitute phase.

struct SubstituteResult {
    PqcParams params;
    ClassifierConfig cfg;
    double holdout_agreement = 0.0; // fraction matching victim labels on held-out queries
};

/// Fit the substitute to the victim's labels with the standard local
/// training loop; the last 20% of queries are held out to measure
/// agreement. Training on a single observed class is rejected.
inline SubstituteResult train_substitute(std::span<const LabeledExample> queries,
                                         const AttackConfig& cfg, int num_classes,
                                         std::uint64_t seed) {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (const auto& q : queries) seen[static_cast<std::size_t>(q.label)] = true;
    int distinct = 0;
    for (bool s : seen) distinct += s ? 1 : 0;
    if (distinct < 2)
        throw DegenerateLabelsError("victim answered with a single class; the substitute "
                                    "has nothing to separate");

    SubstituteResult result;
    result.cfg.arch = cfg.substitute_arch;
    result.cfg.num_classes = num_classes;
    result.cfg.noise = NoiseConfig::noiseless(); // attacker simulates exactly
    result.cfg.learning_rate = cfg.substitute_lr;
    result.cfg.batch_size = cfg.substitute_batch;
    result.cfg.validate();

    const std::size_t holdout = queries.size() / 5;
    const std::size_t train_count = queries.size() - holdout;
    const std::span<const LabeledExample> train_slice = queries.subspan(0, train_count);

    result.params = PqcParams::random_init(result.cfg.arch, derive_seed(seed, 0));
    for (int epoch = 0; epoch < cfg.substitute_epochs; ++epoch)
        result.params = local_epoch(train_slice, result.params, result.cfg,
                                    derive_seed(seed, 1 + epoch));

    if (holdout > 0) {
        std::size_t agree = 0;
        for (std::size_t i = train_count; i < queries.size(); ++i)
            if (predict(queries[i], result.params, result.cfg, 0) == queries[i].label) ++agree;
        result.holdout_agreement = static_cast<double>(agree) / static_cast<double>(holdout);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Perturbation phase.

/// Pure FGSM arithmetic: x' = clamp(x + E * sign(g), 0, 1), sign(0) = 0.
inline std::vector<double> fgsm_step(std::span<const double> x, std::span<const double> grad,
                                     double noise_strength) {
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double s = grad[d] > 0.0 ? 1.0 : (grad[d] < 0.0 ? -1.0 : 0.0);
        out[d] = std::clamp(x[d] + noise_strength * s, 0.0, 1.0);
    }
    return out;
}

/// Loss gradient w.r.t. the INPUT features by central finite differences
/// (h = 1e-3). The parameter-shift rule covers circuit angles only;
/// inputs enter through the normalizing amplitude encoding, so numeric
/// differentiation is the honest option here.
inline std::vector<double> substitute_input_gradient(const LabeledExample& example,
                                                     const PqcParams& params,
                                                     const ClassifierConfig& cfg) {
    constexpr double kStep = 1e-3;
    std::vector<double> grad(example.features.size());
    LabeledExample probe = example;
    for (std::size_t d = 0; d < example.features.size(); ++d) {
        probe.features[d] = example.features[d] + kStep;
        const double up = forward(probe, params, cfg, 0).loss;
        probe.features[d] = example.features[d] - kStep;
        const double down = forward(probe, params, cfg, 0).loss;
        probe.features[d] = example.features[d];
        grad[d] = (up - down) / (2.0 * kStep);
    }
    return grad;
}

/// Full FGSM on one input: estimate the substitute's input gradient at the
/// victim's CURRENT label for that input (black-box attackers have no
/// ground truth), then take one signed step.
inline AdvExample fgsm(const LabeledExample& example, const VictimOracle& victim,
                       const SubstituteResult& substitute, double noise_strength) {
    AdvExample adv;
    adv.original = example;
    adv.noise_strength = noise_strength;
    adv.victim_label_before = victim.query(example.features).label;

    LabeledExample surrogate = example;
    surrogate.label = adv.victim_label_before;
    const auto grad = substitute_input_gradient(surrogate, substitute.params, substitute.cfg);
    adv.perturbed = fgsm_step(example.features, grad, noise_strength);

    const auto verdict = victim.query(adv.perturbed);
    adv.victim_label_after = verdict.label;
    adv.victim_confidence_after = verdict.confidence;
    return adv;
}

// ---------------------------------------------------------------------------
// Scoring phase.

/// Score one batch of adversarial examples against TRUE labels:
/// accuracy, mean confidence over the correct subset, ASR = 1 - accuracy.
inline AttackMetrics evaluate_attack(std::span<const AdvExample> examples) {
    if (examples.empty())
        throw EmptyEvaluationSetError("attack evaluation needs at least one example");
    AttackMetrics m;
    m.noise_strength = examples[0].noise_strength;
    std::size_t correct = 0;
    double confidence = 0.0;
    for (const AdvExample& adv : examples) {
        if (adv.victim_label_after == adv.original.label) {
            ++correct;
            confidence += adv.victim_confidence_after;
        }
    }
    m.adv_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    m.mean_confidence_correct = correct ? confidence / static_cast<double>(correct) : 0.0;
    m.asr = 1.0 - m.adv_accuracy;
    return m;
}

struct AttackRun {
    std::vector<AttackMetrics> per_strength;
    std::vector<AdvExample> examples; // all strengths, generation order
    double substitute_agreement = 0.0;
};

/// End-to-end pipeline: query, fit the substitute, perturb the evaluation
/// set at every noise strength, and score against the victim.
inline AttackRun run_attack(const VictimOracle& victim, std::span<const LabeledExample> eval_set,
                            std::span<const LabeledExample> query_pool, AttackConfig cfg) {
    cfg.validate(victim.num_classes());
    if (eval_set.empty())
        throw EmptyEvaluationSetError("attack needs a nonempty evaluation set");
    if (cfg.substitute_arch.num_qubits == 0)
        throw ConfigError("substitute architecture must be set (qubits >= 1)");

    const int feature_dim = eval_set[0].features.empty()
                                ? victim.max_feature_dim()
                                : static_cast<int>(eval_set[0].features.size());
    const auto queries = build_query_set(victim, cfg.num_queries, query_pool, feature_dim,
                                         derive_seed(cfg.seed, 0));
    const auto substitute =
        train_substitute(queries, cfg, victim.num_classes(), derive_seed(cfg.seed, 1));

    AttackRun run;
    run.substitute_agreement = substitute.holdout_agreement;
    for (double strength : cfg.noise_strengths) {
        std::vector<AdvExample> batch;
        batch.reserve(eval_set.size());
        for (const LabeledExample& ex : eval_set)
            batch.push_back(fgsm(ex, victim, substitute, strength));
        run.per_strength.push_back(evaluate_attack(batch));
        run.examples.insert(run.examples.end(), std::make_move_iterator(batch.begin()),
                            std::make_move_iterator(batch.end()));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Reporting.

inline constexpr const char* kAttackCsvHeader =
    "E,adv_accuracy,mean_confidence_correct,asr,victim_tag";

/// One row per (noise strength, victim); multiple victims concatenate into
/// one table for side-by-side robustness comparison.
inline std::string attack_report_csv(
    const std::vector<std::pair<std::string, std::vector<AttackMetrics>>>& tagged_runs) {
    std::string out = std::string(kAttackCsvHeader) + "\n";
    for (const auto& [tag, metrics] : tagged_runs) {
        for (const AttackMetrics& m : metrics) {
            out += csv_join({format_value(m.noise_strength), format_value(m.adv_accuracy),
                             format_value(m.mean_confidence_correct), format_value(m.asr), tag});
            out += '\n';
        }
    }
    return out;
}

/// Per-strength metric gaps between two victims (a minus b), for the
/// DP-vs-non-DP comparison table. Strength lists must match.
inline std::vector<AttackMetrics> metric_gaps(const std::vector<AttackMetrics>& a,
                                              const std::vector<AttackMetrics>& b) {
    if (a.size() != b.size())
        throw ShapeMismatchError("gap table needs matching noise-strength lists");
    std::vector<AttackMetrics> gaps(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        gaps[i].noise_strength = a[i].noise_strength;
        gaps[i].adv_accuracy = a[i].adv_accuracy - b[i].adv_accuracy;
        gaps[i].mean_confidence_correct =
            a[i].mean_confidence_correct - b[i].mean_confidence_correct;
        gaps[i].asr = a[i].asr - b[i].asr;
    }
    return gaps;
}

/// Binary PGM strip of up to `max_count` perturbed inputs for eyeballing,
/// stacked vertically. Features must form a width x height grid.
inline void dump_adversarial_pgm(const std::string& path, std::span<const AdvExample> examples,
                                 int width, int height, int max_count = 8) {
    const int count = std::min<int>(max_count, static_cast<int>(examples.size()));
    if (count == 0) return;
    std::ofstream out(path, std::ios::binary);
    out << "P5\n" << width << " " << height * count << "\n255\n";
    for (int i = 0; i < count; ++i)
        for (double v : examples[static_cast<std::size_t>(i)].perturbed)
            out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
}

} // namespace qfl
