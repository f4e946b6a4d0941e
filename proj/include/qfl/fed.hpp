#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qfl/data.hpp"
#include "qfl/dp.hpp"
#include "qfl/errors.hpp"
#include "qfl/format.hpp"
#include "qfl/model.hpp"
#include "qfl/parallel.hpp"
#include "qfl/rng.hpp"

namespace qfl {

enum class PartitionStrategy { kIid, kLabelSkew };

inline std::string to_string(PartitionStrategy s) {
    return s == PartitionStrategy::kIid ? "IID" : "LABEL_SKEW";
}

inline PartitionStrategy partition_strategy_from_string(const std::string& s) {
    if (s == "IID") return PartitionStrategy::kIid;
    if (s == "LABEL_SKEW") return PartitionStrategy::kLabelSkew;
    throw ConfigError("partition must be IID or LABEL_SKEW, got '" + s + "'");
}

/// Orchestration knobs for the federation loop.
struct FederationConfig {
    int num_clients = 10;
    int num_rounds = 50;
    int local_epochs = 5;
    ClassifierConfig classifier;
    std::uint64_t master_seed = 1;
    PartitionStrategy partition = PartitionStrategy::kIid;
    int parallelism = 1;           // concurrent clients; never changes results
    bool eval_with_shots = false;  // default: exact depolarized-expectation eval
    double delta_total = 1e-5;     // privacy failure probability across the run
    VarianceMode variance_mode = VarianceMode::kPaperLinearRate;

    void validate() const {
        if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
        if (num_rounds < 1) throw ConfigError("num_rounds must be >= 1");
        if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
        if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
        if (delta_total <= 0.0 || delta_total >= 1.0)
            throw ConfigError("delta_total must be in (0, 1)");
        classifier.validate();
    }
};

struct ClientState {
    int client_id = 0;
    std::vector<LabeledExample> shard;
    PqcParams params;
};

struct ClientMetrics {
    double train_loss = 0.0;
    double train_acc = 0.0;
};

struct RoundMetrics {
    int round = 0;
    std::vector<ClientMetrics> clients;
    double mean_train_loss = 0.0;
    double mean_train_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
    double wall_seconds = 0.0; // informational; never written to artifacts
};

struct TrainResult {
    PqcParams params;
    std::vector<RoundMetrics> metrics;
    DpParams dp_params;            // schedule the budget was computed from
    std::optional<DpBudget> budget; // absent when the run is uncertifiable
};

// ---------------------------------------------------------------------------
// Partitioning.

/// Split a dataset into N client shards. IID: shuffle, then deal equal
/// chunks with the remainder going to the earliest clients. LABEL_SKEW:
/// sort by label (shuffling within each label), then deal chunks, so each
/// client sees only a narrow label band.
inline std::vector<std::vector<LabeledExample>> partition(const Dataset& dataset,
                                                          int num_clients,
                                                          PartitionStrategy strategy,
                                                          std::uint64_t seed) {
    const std::size_t n = dataset.examples.size();
    if (n < static_cast<std::size_t>(num_clients))
        throw TooFewExamplesError(std::to_string(n) + " examples cannot cover " +
                                  std::to_string(num_clients) + " clients");
    Rng rng(seed);
    std::vector<std::size_t> order = shuffled_indices(n, rng);
    if (strategy == PartitionStrategy::kLabelSkew) {
        std::stable_sort(order.begin(), order.end(), [&dataset](std::size_t a, std::size_t b) {
            return dataset.examples[a].label < dataset.examples[b].label;
        });
    }
    std::vector<std::vector<LabeledExample>> shards(static_cast<std::size_t>(num_clients));
    const std::size_t base = n / static_cast<std::size_t>(num_clients);
    const std::size_t remainder = n % static_cast<std::size_t>(num_clients);
    std::size_t cursor = 0;
    for (std::size_t c = 0; c < shards.size(); ++c) {
        const std::size_t take = base + (c < remainder ? 1 : 0);
        shards[c].reserve(take);
        for (std::size_t i = 0; i < take; ++i)
            shards[c].push_back(dataset.examples[order[cursor++]]);
    }
    return shards;
}

// ---------------------------------------------------------------------------
// Aggregation.

/// FedAvg: elementwise arithmetic mean of the client parameter tensors.
inline PqcParams aggregate(const std::vector<PqcParams>& client_params) {
    if (client_params.empty()) throw EmptyListError("aggregate needs at least one client");
    PqcParams mean = client_params[0];
    for (std::size_t c = 1; c < client_params.size(); ++c) {
        if (client_params[c].values.size() != mean.values.size() ||
            client_params[c].num_qubits != mean.num_qubits ||
            client_params[c].num_layers != mean.num_layers)
            throw ShapeMismatchError("client " + std::to_string(c) +
                                     " returned a differently shaped tensor");
        for (std::size_t d = 0; d < mean.values.size(); ++d)
            mean.values[d] += client_params[c].values[d];
    }
    const double inv = 1.0 / static_cast<double>(client_params.size());
    for (double& v : mean.values) v *= inv;
    return mean;
}

// ---------------------------------------------------------------------------
// Round loop.

namespace detail {

/// Evaluation runs with exact expectations (shot noise off) unless the
/// configuration asks for finite-shot evaluation.
inline ClassifierConfig eval_config(const FederationConfig& cfg) {
    ClassifierConfig eval = cfg.classifier;
    if (!cfg.eval_with_shots) eval.noise.shots = kInfiniteShots;
    return eval;
}

} // namespace detail

/// One federated round: every client copies the incoming global params,
/// runs K local epochs, and the server averages the results. A failing
/// client aborts the whole round. Client work parallelizes; seeds depend
/// only on (round_seed, client, epoch), so the worker count is invisible.
inline std::pair<PqcParams, RoundMetrics> run_round(const PqcParams& global_params,
                                                    std::vector<ClientState>& clients,
                                                    const FederationConfig& cfg,
                                                    std::uint64_t round_seed) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const ClassifierConfig eval_cfg = detail::eval_config(cfg);

    std::vector<PqcParams> returned(clients.size());
    std::vector<ClientMetrics> stats(clients.size());
    parallel_for(clients.size(), cfg.parallelism, [&](std::size_t c) {
        ClientState& client = clients[c];
        client.params = global_params;
        const std::uint64_t client_seed =
            derive_seed(round_seed, static_cast<std::uint64_t>(client.client_id));
        for (int epoch = 0; epoch < cfg.local_epochs; ++epoch)
            client.params = local_epoch(client.shard, client.params, cfg.classifier,
                                        derive_seed(client_seed, epoch));
        returned[c] = client.params;
        const EvalMetrics m = evaluate(client.shard, client.params, eval_cfg,
                                       derive_seed(client_seed, 1u << 20));
        stats[c] = {m.loss, m.accuracy};
    });

    RoundMetrics metrics;
    metrics.clients = std::move(stats);
    for (const ClientMetrics& m : metrics.clients) {
        metrics.mean_train_loss += m.train_loss;
        metrics.mean_train_acc += m.train_acc;
    }
    metrics.mean_train_loss /= static_cast<double>(clients.size());
    metrics.mean_train_acc /= static_cast<double>(clients.size());
    metrics.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {aggregate(returned), std::move(metrics)};
}

// ---------------------------------------------------------------------------
// Full training run.

/// Build the accountant's view of a federation config. The local dataset
/// size is the smallest shard (the worst case for sensitivity).
inline DpParams dp_params_from(const FederationConfig& cfg, std::size_t min_shard_size) {
    DpParams dp;
    dp.num_qubits = cfg.classifier.arch.num_qubits;
    dp.num_layers = cfg.classifier.arch.num_layers;
    dp.shots = cfg.classifier.noise.shots;
    dp.lambda = cfg.classifier.noise.effective_lambda();
    dp.grad_bound = cfg.classifier.grad_bound;
    dp.learning_rate = cfg.classifier.learning_rate;
    dp.local_epochs = cfg.local_epochs;
    dp.clip = cfg.classifier.grad_clip;
    dp.local_dataset_size = min_shard_size;
    dp.num_clients = cfg.num_clients;
    dp.num_rounds = cfg.num_rounds;
    dp.variance_mode = cfg.variance_mode;
    dp.split_delta(cfg.delta_total);
    return dp;
}

/// T rounds of federated training from a seeded uniform [-pi, pi)
/// initialization, with per-round train/test metrics and the privacy
/// budget for the executed schedule. Runs with INFINITE shots (or a
/// zero-variance channel) return no budget: they cannot be certified.
inline TrainResult train(const FederationConfig& cfg, const Dataset& train_set,
                         const Dataset& test_set) {
    cfg.validate();
    if (test_set.examples.empty())
        throw EmptyEvaluationSetError("training requires a nonempty test set");

    auto shards = partition(train_set, cfg.num_clients, cfg.partition,
                            derive_seed(cfg.master_seed, 0));
    std::vector<ClientState> clients(shards.size());
    std::size_t min_shard = shards[0].size();
    for (std::size_t c = 0; c < shards.size(); ++c) {
        clients[c].client_id = static_cast<int>(c);
        clients[c].shard = std::move(shards[c]);
        min_shard = std::min(min_shard, clients[c].shard.size());
    }

    TrainResult result;
    result.params = PqcParams::random_init(cfg.classifier.arch, derive_seed(cfg.master_seed, 1));
    result.dp_params = dp_params_from(cfg, min_shard);
    if (!cfg.classifier.noise.infinite_shots() &&
        total_update_variance(result.dp_params) > 0.0)
        result.budget = compute_budget(result.dp_params);

    const ClassifierConfig eval_cfg = detail::eval_config(cfg);
    result.metrics.reserve(static_cast<std::size_t>(cfg.num_rounds));
    for (int t = 0; t < cfg.num_rounds; ++t) {
        auto [next, metrics] =
            run_round(result.params, clients, cfg, derive_seed(cfg.master_seed, 2 + t));
        result.params = std::move(next);
        metrics.round = t;
        const EvalMetrics test = evaluate(test_set.examples, result.params, eval_cfg,
                                          derive_seed(cfg.master_seed, 1u << 30));
        metrics.test_loss = test.loss;
        metrics.test_acc = test.accuracy;
        result.metrics.push_back(std::move(metrics));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Artifacts.

inline constexpr const char* kMetricsCsvHeader =
    "round,client,train_loss,train_acc,test_loss,test_acc";

/// Per round: one row per client (empty test cells), then a global row
/// with client = -1 carrying the mean train metrics and the test metrics.
inline std::string metrics_csv(const std::vector<RoundMetrics>& rounds) {
    std::string out = std::string(kMetricsCsvHeader) + "\n";
    for (const RoundMetrics& r : rounds) {
        for (std::size_t c = 0; c < r.clients.size(); ++c) {
            out += csv_join({std::to_string(r.round), std::to_string(c),
                             format_value(r.clients[c].train_loss),
                             format_value(r.clients[c].train_acc), "", ""});
            out += '\n';
        }
        out += csv_join({std::to_string(r.round), "-1", format_value(r.mean_train_loss),
                         format_value(r.mean_train_acc), format_value(r.test_loss),
                         format_value(r.test_acc)});
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text with a shape header, then one parameter
// per line in round-trip-exact decimal.

struct Checkpoint {
    PqcParams params;
    int num_classes = 0;
    int round = 0;
};

inline void write_checkpoint(const std::string& path, const PqcParams& params, int num_classes,
                             int round) {
    std::ofstream out(path);
    out << "qfl-checkpoint 1\n";
    out << "qubits " << params.num_qubits << "\n";
    out << "layers " << params.num_layers << "\n";
    out << "classes " << num_classes << "\n";
    out << "round " << round << "\n";
    for (double v : params.values) out << format_exact(v) << "\n";
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TruncatedFileError("cannot open '" + path + "'");
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "qfl-checkpoint" || version != 1)
        throw BadMagicError("'" + path + "' is not a checkpoint file");
    Checkpoint ck;
    std::string key;
    int qubits = 0, layers = 0;
    in >> key >> qubits;
    if (key != "qubits") throw BadMagicError("checkpoint missing qubits field");
    in >> key >> layers;
    if (key != "layers") throw BadMagicError("checkpoint missing layers field");
    in >> key >> ck.num_classes;
    if (key != "classes") throw BadMagicError("checkpoint missing classes field");
    in >> key >> ck.round;
    if (key != "round") throw BadMagicError("checkpoint missing round field");
    ck.params.num_qubits = qubits;
    ck.params.num_layers = layers;
    const std::size_t count = static_cast<std::size_t>(layers) * qubits * 3;
    ck.params.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        if (!(in >> ck.params.values[i]))
            throw TruncatedFileError("checkpoint ends after " + std::to_string(i) + " of " +
                                     std::to_string(count) + " parameters");
    return ck;
}

} // namespace qfl
