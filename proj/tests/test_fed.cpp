#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "qfl/fed.hpp"

using namespace qfl;
using Catch::Matchers::WithinAbs;

namespace {

FederationConfig smoke_config() {
    FederationConfig cfg;
    cfg.num_clients = 2;
    cfg.num_rounds = 5;
    cfg.local_epochs = 2;
    cfg.classifier.arch = {4, 2};
    cfg.classifier.num_classes = 2;
    cfg.classifier.noise = NoiseConfig::noiseless();
    cfg.classifier.learning_rate = 0.1;
    cfg.classifier.batch_size = 16;
    cfg.master_seed = 2024;
    return cfg;
}

} // namespace

TEST_CASE("partitioning") {
    SECTION("even split covers the dataset disjointly") {
        auto ds = make_synthetic(2, 50, 4, 0.5, 1);
        auto shards = partition(ds, 10, PartitionStrategy::kIid, 7);
        REQUIRE(shards.size() == 10);
        std::multiset<double> original, partitioned;
        for (const auto& ex : ds.examples) original.insert(ex.features[0]);
        for (const auto& shard : shards) {
            REQUIRE(shard.size() == 10);
            for (const auto& ex : shard) partitioned.insert(ex.features[0]);
        }
        REQUIRE(original == partitioned);
    }
    SECTION("remainder goes to the earliest clients") {
        Dataset ds = make_synthetic(1, 101, 4, 0.5, 2);
        auto shards = partition(ds, 10, PartitionStrategy::kIid, 7);
        REQUIRE(shards[0].size() == 11);
        for (std::size_t c = 1; c < 10; ++c) REQUIRE(shards[c].size() == 10);
    }
    SECTION("same seed, same partition") {
        auto ds = make_synthetic(2, 20, 4, 0.5, 3);
        auto a = partition(ds, 4, PartitionStrategy::kIid, 9);
        auto b = partition(ds, 4, PartitionStrategy::kIid, 9);
        for (std::size_t c = 0; c < 4; ++c) {
            REQUIRE(a[c].size() == b[c].size());
            for (std::size_t i = 0; i < a[c].size(); ++i)
                REQUIRE(a[c][i].features == b[c][i].features);
        }
    }
    SECTION("label skew concentrates labels") {
        auto ds = make_synthetic(4, 25, 8, 0.5, 4);
        auto shards = partition(ds, 4, PartitionStrategy::kLabelSkew, 9);
        for (const auto& shard : shards) {
            std::set<int> labels;
            for (const auto& ex : shard) labels.insert(ex.label);
            REQUIRE(labels.size() == 1);
        }
    }
    SECTION("too few examples") {
        auto ds = make_synthetic(2, 2, 4, 0.5, 5);
        REQUIRE_THROWS_AS(partition(ds, 5, PartitionStrategy::kIid, 1), TooFewExamplesError);
    }
}

TEST_CASE("aggregation") {
    PqcArchitecture arch{2, 1};
    SECTION("consensus is a fixed point") {
        auto p = PqcParams::random_init(arch, 11);
        auto mean = aggregate({p, p, p});
        for (std::size_t d = 0; d < p.size(); ++d)
            REQUIRE_THAT(mean.values[d], WithinAbs(p.values[d], 1e-15));
    }
    SECTION("opposite tensors cancel") {
        auto p = PqcParams::random_init(arch, 12);
        auto neg = p;
        for (double& v : neg.values) v = -v;
        auto mean = aggregate({p, neg});
        for (double v : mean.values) REQUIRE_THAT(v, WithinAbs(0.0, 1e-15));
    }
    SECTION("matches an independent elementwise mean") {
        auto a = PqcParams::random_init(arch, 13);
        auto b = PqcParams::random_init(arch, 14);
        auto c = PqcParams::random_init(arch, 15);
        auto mean = aggregate({a, b, c});
        for (std::size_t d = 0; d < a.size(); ++d) {
            const double oracle = (a.values[d] + b.values[d] + c.values[d]) / 3.0;
            REQUIRE_THAT(mean.values[d], WithinAbs(oracle, 1e-15));
            const double lo = std::min({a.values[d], b.values[d], c.values[d]});
            const double hi = std::max({a.values[d], b.values[d], c.values[d]});
            REQUIRE(mean.values[d] >= lo - 1e-15);
            REQUIRE(mean.values[d] <= hi + 1e-15);
        }
    }
    SECTION("rejects empty and mismatched input") {
        REQUIRE_THROWS_AS(aggregate({}), EmptyListError);
        auto a = PqcParams::random_init(arch, 16);
        auto b = PqcParams::random_init({3, 1}, 17);
        REQUIRE_THROWS_AS(aggregate({a, b}), ShapeMismatchError);
    }
}

TEST_CASE("federated rounds") {
    SECTION("zero learning rate keeps the global model fixed") {
        auto cfg = smoke_config();
        cfg.classifier.learning_rate = 0.0;
        auto ds = make_synthetic(2, 10, 16, 0.5, 21);
        auto shards = partition(ds, 2, PartitionStrategy::kIid, 1);
        std::vector<ClientState> clients(2);
        for (int c = 0; c < 2; ++c) clients[c] = {c, shards[c], {}};
        auto global = PqcParams::random_init(cfg.classifier.arch, 22);
        auto [next, metrics] = run_round(global, clients, cfg, 33);
        REQUIRE(next.values == global.values);
        REQUIRE(metrics.clients.size() == 2);
    }
    SECTION("twin clients produce twin updates") {
        auto cfg = smoke_config();
        auto ds = make_synthetic(2, 10, 16, 0.5, 23);
        auto shards = partition(ds, 2, PartitionStrategy::kIid, 1);
        // Same shard AND same client id: seeds coincide, so updates must too.
        std::vector<ClientState> clients(2);
        clients[0] = {0, shards[0], {}};
        clients[1] = {0, shards[0], {}};
        auto global = PqcParams::random_init(cfg.classifier.arch, 24);
        auto [next, metrics] = run_round(global, clients, cfg, 35);
        REQUIRE(clients[0].params.values == clients[1].params.values);
        REQUIRE(next.values == clients[0].params.values);
    }
    SECTION("config preconditions are enforced") {
        auto cfg = smoke_config();
        cfg.local_epochs = 0;
        std::vector<ClientState> clients;
        REQUIRE_THROWS_AS(run_round(PqcParams::zeros(cfg.classifier.arch), clients, cfg, 1),
                          ConfigError);
    }
}

TEST_CASE("end-to-end training") {
    auto train_ds = make_synthetic(2, 50, 16, 0.5, 123);
    auto test_ds = make_synthetic(2, 20, 16, 0.5, 321);
    SECTION("one round, one metrics entry") {
        auto cfg = smoke_config();
        cfg.num_rounds = 1;
        auto result = train(cfg, train_ds, test_ds);
        REQUIRE(result.metrics.size() == 1);
        REQUIRE(result.metrics[0].round == 0);
        REQUIRE(result.metrics[0].clients.size() == 2);
    }
    SECTION("separable blobs train past 0.9 accuracy") {
        auto cfg = smoke_config();
        auto result = train(cfg, train_ds, test_ds);
        REQUIRE(result.metrics.back().mean_train_acc > 0.9);
        REQUIRE(result.metrics.back().test_acc > 0.9);
        for (const auto& m : result.metrics) {
            REQUIRE(m.mean_train_acc >= 0.0);
            REQUIRE(m.mean_train_acc <= 1.0);
        }
    }
    SECTION("noiseless runs carry no privacy budget") {
        auto cfg = smoke_config();
        auto result = train(cfg, train_ds, test_ds);
        REQUIRE_FALSE(result.budget.has_value());
    }
    SECTION("finite-shot budget equals the standalone accountant") {
        auto cfg = smoke_config();
        cfg.num_rounds = 1;
        cfg.local_epochs = 1;
        cfg.classifier.noise = NoiseConfig::finite(20, 0.05);
        auto result = train(cfg, train_ds, test_ds);
        REQUIRE(result.budget.has_value());
        // Even 100-example split over 2 clients: every shard holds 50.
        auto dp = dp_params_from(cfg, 50);
        const auto direct = compute_budget(dp);
        REQUIRE(result.budget->epsilon_total == direct.epsilon_total);
        REQUIRE(result.budget->sigma == direct.sigma);
        REQUIRE(result.dp_params.local_dataset_size == 50);
    }
    SECTION("bit-identical reruns, independent of parallelism") {
        auto cfg = smoke_config();
        cfg.num_rounds = 2;
        cfg.classifier.noise = NoiseConfig::finite(30, 0.02);
        auto a = train(cfg, train_ds, test_ds);
        auto b = train(cfg, train_ds, test_ds);
        REQUIRE(a.params.values == b.params.values);
        cfg.parallelism = 4;
        auto c = train(cfg, train_ds, test_ds);
        REQUIRE(a.params.values == c.params.values);
        for (std::size_t t = 0; t < a.metrics.size(); ++t) {
            REQUIRE(a.metrics[t].mean_train_loss == c.metrics[t].mean_train_loss);
            REQUIRE(a.metrics[t].test_acc == c.metrics[t].test_acc);
        }
    }
    SECTION("empty test set is rejected up front") {
        auto cfg = smoke_config();
        Dataset empty;
        REQUIRE_THROWS_AS(train(cfg, train_ds, empty), EmptyEvaluationSetError);
    }
}

TEST_CASE("metrics CSV layout") {
    RoundMetrics r;
    r.round = 0;
    r.clients = {{0.5, 0.75}, {0.25, 1.0}};
    r.mean_train_loss = 0.375;
    r.mean_train_acc = 0.875;
    r.test_loss = 0.4;
    r.test_acc = 0.9;
    const std::string csv = metrics_csv({r});
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    REQUIRE(line == "round,client,train_loss,train_acc,test_loss,test_acc");
    std::getline(lines, line);
    REQUIRE(line == "0,0,0.5,0.75,,");
    std::getline(lines, line);
    REQUIRE(line == "0,1,0.25,1,,");
    std::getline(lines, line);
    REQUIRE(line == "0,-1,0.375,0.875,0.4,0.9");
    REQUIRE_FALSE(std::getline(lines, line));
}

TEST_CASE("checkpoint round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "qfl_fed_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    auto params = PqcParams::random_init({3, 2}, 99);
    write_checkpoint(path, params, 4, 17);
    const Checkpoint ck = read_checkpoint(path);
    REQUIRE(ck.params.num_qubits == 3);
    REQUIRE(ck.params.num_layers == 2);
    REQUIRE(ck.num_classes == 4);
    REQUIRE(ck.round == 17);
    REQUIRE(ck.params.values == params.values);

    SECTION("bad magic") {
        const std::string bad = (dir / "bad.ckpt").string();
        std::ofstream(bad) << "not-a-checkpoint 1\n";
        REQUIRE_THROWS_AS(read_checkpoint(bad), BadMagicError);
    }
    SECTION("truncated parameter list") {
        const std::string cut = (dir / "cut.ckpt").string();
        std::ofstream(cut) << "qfl-checkpoint 1\nqubits 3\nlayers 2\nclasses 4\nround 0\n1.5\n";
        REQUIRE_THROWS_AS(read_checkpoint(cut), TruncatedFileError);
    }
    fs::remove_all(dir);
}
