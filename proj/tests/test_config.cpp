#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "qfl/runner.hpp"

using namespace qfl;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// A config small enough that execute_train finishes in about a second.
RunConfig tiny_run(const std::string& out_dir) {
    RunConfig cfg;
    cfg.num_qubits = 4;
    cfg.num_layers = 2;
    cfg.num_classes = 2;
    cfg.shots = 50;
    cfg.lambda = 0.02;
    cfg.num_clients = 2;
    cfg.num_rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.1;
    cfg.synthetic_per_class = 15;
    cfg.synthetic_test_per_class = 5;
    cfg.synthetic_feature_dim = 16;
    cfg.num_queries = 60;
    cfg.eval_size = 10;
    cfg.noise_strengths = {0.0, 0.2};
    cfg.master_seed = 5;
    cfg.output_dir = out_dir;
    return cfg;
}

/// Run the installed command-line binary; returns its exit code and
/// captures stderr into `err_text`.
int run_cli(const std::string& args, std::string* err_text = nullptr) {
    static const std::string bin = QFL_CLI_PATH;
    const std::string err_file =
        (fs::temp_directory_path() / "qfl_cli_stderr.txt").string();
    const std::string cmd = bin + " " + args + " >/dev/null 2>" + err_file;
    const int status = std::system(cmd.c_str());
    if (err_text) *err_text = slurp(err_file);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("config text parsing") {
    SECTION("values land on the right fields, with comments and blanks") {
        const RunConfig cfg = parse_config("# a run\n"
                                           "[circuit]\n"
                                           "num_qubits = 6   # inline note\n"
                                           "\n"
                                           "[noise]\n"
                                           "  lambda =   0.25\n"
                                           "allow_noiseless = true\n");
        REQUIRE(cfg.num_qubits == 6);
        REQUIRE(cfg.lambda == 0.25);
        REQUIRE(cfg.allow_noiseless);
        REQUIRE(cfg.num_layers == 3); // untouched default
    }
    SECTION("later entries win") {
        const RunConfig cfg = parse_config("[circuit]\nnum_qubits = 5\nnum_qubits = 9\n");
        REQUIRE(cfg.num_qubits == 9);
    }
    SECTION("enums and lists round through their spellings") {
        const RunConfig cfg = parse_config("[privacy]\nvariance_mode = DERIVED\n"
                                           "[data]\npartition = LABEL_SKEW\n"
                                           "[sweep]\nshots = 10, 20 ,30\nlambdas = 0.5\n");
        REQUIRE(cfg.variance_mode == VarianceMode::kDerivedSquaredRate);
        REQUIRE(cfg.partition == PartitionStrategy::kLabelSkew);
        REQUIRE(cfg.sweep_shots == std::vector<std::uint64_t>{10, 20, 30});
        REQUIRE(cfg.sweep_lambdas == std::vector<double>{0.5});
    }
    SECTION("malformed input names the problem") {
        REQUIRE_THROWS_MATCHES(parse_config("[circuit\nnum_qubits = 4\n"), ConfigError,
                               Catch::Matchers::MessageMatches(ContainsSubstring("section")));
        REQUIRE_THROWS_MATCHES(parse_config("num_qubits = 4\n"), ConfigError,
                               Catch::Matchers::MessageMatches(ContainsSubstring("before any")));
        REQUIRE_THROWS_MATCHES(parse_config("[circuit]\nnum_qubits\n"), ConfigError,
                               Catch::Matchers::MessageMatches(ContainsSubstring("key = value")));
        REQUIRE_THROWS_MATCHES(parse_config("[circuit]\nnum_kubits = 4\n"), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("unknown config key 'circuit.num_kubits'")));
        REQUIRE_THROWS_MATCHES(parse_config("[circuit]\nnum_qubits = four\n"), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("circuit.num_qubits expects an integer")));
        REQUIRE_THROWS_MATCHES(parse_config("[noise]\nshots = -5\n"), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("noise.shots must be nonnegative")));
        REQUIRE_THROWS_MATCHES(parse_config("[sweep]\nshots = 10,,30\n"), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("sweep.shots has an empty list entry")));
        REQUIRE_THROWS_AS(parse_config("[privacy]\nvariance_mode = MAYBE\n"), ConfigError);
    }
}

TEST_CASE("config overrides") {
    RunConfig cfg;
    SECTION("override beats the default") {
        apply_overrides(cfg, {"noise.lambda=0.5", "train.batch_size=7"});
        REQUIRE(cfg.lambda == 0.5);
        REQUIRE(cfg.batch_size == 7);
    }
    SECTION("malformed or unknown overrides are rejected") {
        REQUIRE_THROWS_MATCHES(apply_overrides(cfg, {"noise.lambda"}), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("section.key=value")));
        REQUIRE_THROWS_MATCHES(apply_overrides(cfg, {"noise.gamma=1"}), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("unknown config key 'noise.gamma'")));
    }
}

TEST_CASE("config serialization") {
    SECTION("echo of the defaults parses back to the defaults") {
        const RunConfig defaults;
        const std::string echo = serialize_config(defaults);
        REQUIRE(serialize_config(parse_config(echo)) == echo);
        REQUIRE_THAT(echo, ContainsSubstring("[circuit]\n"));
        REQUIRE_THAT(echo, ContainsSubstring("variance_mode = PAPER\n"));
        REQUIRE_THAT(echo, ContainsSubstring("noise_strengths = 0.12,0.14,"));
    }
    SECTION("doubles survive the round trip bit-exactly") {
        RunConfig cfg;
        cfg.lambda = 1.0 / 3.0;
        cfg.learning_rate = 0.07;
        const RunConfig back = parse_config(serialize_config(cfg));
        REQUIRE(back.lambda == cfg.lambda);
        REQUIRE(back.learning_rate == cfg.learning_rate);
    }
    SECTION("artifact preamble embeds and yields the config") {
        RunConfig cfg;
        cfg.lambda = 0.125;
        cfg.output_dir = "/tmp/somewhere";
        const std::string artifact =
            config_comment_block(cfg, "qfl-metrics 1") + "round,client\n0,1\n";
        REQUIRE_THAT(artifact, ContainsSubstring("# schema: qfl-metrics 1\n"));
        const RunConfig back = parse_config(extract_embedded_config(artifact));
        REQUIRE(back.lambda == 0.125);
        REQUIRE(back.output_dir == "/tmp/somewhere");
        REQUIRE_THROWS_AS(extract_embedded_config("just,a,csv\n"), BadMagicError);
    }
}

TEST_CASE("config validation") {
    const auto expect_rejects = [](void (*mutate)(RunConfig&), const std::string& field) {
        RunConfig cfg;
        mutate(cfg);
        REQUIRE_THROWS_MATCHES(cfg.validate(), ConfigError,
                               Catch::Matchers::MessageMatches(ContainsSubstring(field)));
    };
    expect_rejects([](RunConfig& c) { c.lambda = -1.0; }, "noise.lambda");
    expect_rejects([](RunConfig& c) { c.num_qubits = 15; }, "circuit.num_qubits");
    expect_rejects([](RunConfig& c) { c.num_classes = 1; }, "circuit.num_classes");
    expect_rejects([](RunConfig& c) { c.learning_rate = 0.0; }, "train.learning_rate");
    expect_rejects([](RunConfig& c) { c.delta_total = 1.0; }, "privacy.delta_total");
    expect_rejects([](RunConfig& c) { c.source = "parquet"; }, "data.source");
    expect_rejects([](RunConfig& c) { c.source = "csv"; }, "data.train_csv");
    expect_rejects([](RunConfig& c) { c.sweep_lambdas = {0.0}; }, "sweep.lambdas");
    expect_rejects([](RunConfig& c) { c.num_queries = 1; }, "attack.num_queries");
    expect_rejects([](RunConfig& c) { c.noise_strengths = {-0.1}; }, "attack.noise_strengths");
    expect_rejects([](RunConfig& c) { c.parallelism = 0; }, "run.parallelism");
    expect_rejects(
        [](RunConfig& c) {
            c.num_qubits = 3;
            c.num_classes = 2;
            c.synthetic_feature_dim = 16; // exceeds the 2^3 amplitude slots
        },
        "data.synthetic_feature_dim");
}

TEST_CASE("dataset assembly") {
    SECTION("synthetic sizes and the subset cap") {
        RunConfig cfg = tiny_run("unused");
        const TrainTestData full = load_datasets(cfg);
        REQUIRE(full.train.examples.size() == 30);
        REQUIRE(full.test.examples.size() == 10);
        REQUIRE(full.train.feature_dim == 16);
        cfg.subset_size = 12;
        REQUIRE(load_datasets(cfg).train.examples.size() == 12);
    }
    SECTION("data wider than the circuit names the qubit count") {
        TempDir dir("qfl_cfg_wide");
        const Dataset wide = make_synthetic(2, 4, 32, 0.5, 1);
        write_dataset_csv(dir.file("wide.csv"), wide);
        RunConfig cfg = tiny_run("unused");
        cfg.source = "csv";
        cfg.train_csv = dir.file("wide.csv");
        cfg.test_csv = dir.file("wide.csv");
        REQUIRE_THROWS_MATCHES(load_datasets(cfg), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   ContainsSubstring("circuit.num_qubits")));
    }
}

TEST_CASE("train command artifacts") {
    TempDir dir("qfl_cfg_train");
    const RunConfig cfg = tiny_run(dir.file("out"));
    const std::vector<std::string> written = execute_train(cfg);
    REQUIRE(written.size() == 3);
    for (const std::string& path : written) REQUIRE(fs::exists(path));

    SECTION("metrics carry the schema, the config, and one row per client+global") {
        const std::string metrics = slurp(written[0]);
        REQUIRE(metrics.rfind("# schema: qfl-metrics 1\n", 0) == 0);
        REQUIRE_THAT(metrics,
                     ContainsSubstring("\nround,client,train_loss,train_acc,test_loss,test_acc\n"));
        std::size_t rows = 0;
        std::istringstream lines(metrics);
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line[0] != 'r') ++rows;
        REQUIRE(rows == 2 * (2 + 1)); // num_rounds * (clients + global)
        const RunConfig embedded = parse_config(extract_embedded_config(metrics));
        REQUIRE(serialize_config(embedded) == serialize_config(cfg));
    }
    SECTION("checkpoint reads back through the appended config echo") {
        const Checkpoint ck = read_checkpoint(written[1]);
        REQUIRE(ck.params.num_qubits == 4);
        REQUIRE(ck.params.num_layers == 2);
        REQUIRE(ck.num_classes == 2);
        REQUIRE(ck.round == 2);
        REQUIRE_THAT(slurp(written[1]), ContainsSubstring("# config-begin"));
    }
    SECTION("privacy report parses, with live accounting for a noisy run") {
        const auto report = nlohmann::json::parse(slurp(written[2]));
        REQUIRE(report["schema"] == "qfl-dp-report 1");
        REQUIRE(report["config"]["noise"]["lambda"] == "0.02");
        REQUIRE(report["accounting"]["budget"]["epsilon_total"].get<double>() > 0.0);
    }
    SECTION("a noiseless run reports no accounting") {
        RunConfig quiet = cfg;
        quiet.shots = kInfiniteShots;
        quiet.lambda = 0.0;
        quiet.allow_noiseless = true;
        quiet.output_dir = dir.file("quiet");
        const auto written_quiet = execute_train(quiet);
        const auto report = nlohmann::json::parse(slurp(written_quiet[2]));
        REQUIRE(report["accounting"].is_null());
    }
    SECTION("reruns are byte-identical, at any parallelism") {
        const std::string first_metrics = slurp(written[0]);
        const std::string first_checkpoint = slurp(written[1]);
        execute_train(cfg);
        REQUIRE(slurp(written[0]) == first_metrics);
        RunConfig wide = cfg;
        wide.parallelism = 4;
        wide.output_dir = dir.file("par4");
        const auto written_par = execute_train(wide);
        // identical modulo the echoed parallelism/output_dir lines
        const auto strip = [](const std::string& text) {
            std::string out;
            std::istringstream lines(text);
            std::string line;
            while (std::getline(lines, line))
                if (line.rfind("# parallelism", 0) != 0 && line.rfind("# output_dir", 0) != 0)
                    out += line + "\n";
            return out;
        };
        REQUIRE(strip(slurp(written_par[0])) == strip(first_metrics));
        REQUIRE(strip(slurp(written_par[1])) == strip(first_checkpoint));
    }
}

TEST_CASE("dp-sweep command artifacts") {
    TempDir dir("qfl_cfg_sweep");
    RunConfig cfg = tiny_run(dir.file("out"));
    SECTION("grid size and budget growth in the shot count") {
        cfg.sweep_shots = {30, 100, 1000};
        cfg.sweep_lambdas = {0.01, 0.05};
        const std::string csv = slurp(execute_dp_sweep(cfg)[0]);
        std::map<double, std::vector<double>> eps_by_lambda;
        std::istringstream lines(csv);
        std::string line;
        std::size_t rows = 0;
        while (std::getline(lines, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'M') continue;
            ++rows;
            std::istringstream cells(line);
            std::string cell;
            std::vector<std::string> fields;
            while (std::getline(cells, cell, ',')) fields.push_back(cell);
            REQUIRE(fields.size() == 9);
            eps_by_lambda[std::stod(fields[1])].push_back(std::stod(fields[7]));
        }
        REQUIRE(rows == 6);
        for (const auto& [lambda, eps] : eps_by_lambda) {
            REQUIRE(eps.size() == 3);
            REQUIRE(eps[0] < eps[1]); // 30 -> 100 shots leaks more
            REQUIRE(eps[1] < eps[2]); // 100 -> 1000 shots leaks more
        }
    }
    SECTION("a 1x1 grid gives one data row") {
        cfg.sweep_shots = {60};
        cfg.sweep_lambdas = {0.05};
        const std::string csv = slurp(execute_dp_sweep(cfg)[0]);
        REQUIRE_THAT(csv, ContainsSubstring("\nM,lambda,"));
        REQUIRE(std::count(csv.begin(), csv.end(), '\n') >=
                2); // preamble plus header plus one row
        std::size_t rows = 0;
        std::istringstream lines(csv);
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line[0] != 'M') ++rows;
        REQUIRE(rows == 1);
    }
}

TEST_CASE("attack command artifacts") {
    TempDir dir("qfl_cfg_attack");
    RunConfig cfg = tiny_run(dir.file("out"));
    const std::vector<std::string> trained = execute_train(cfg);
    const std::string checkpoint = trained[1];

    SECTION("zero strength reproduces the clean accuracy, and reruns match") {
        const auto written = execute_attack(cfg, {checkpoint});
        const std::string csv = slurp(written[0]);

        // recompute the clean accuracy through the same oracle interface
        const Checkpoint ck = read_checkpoint(checkpoint);
        const VictimOracle oracle =
            VictimOracle::from_checkpoint(ck, cfg.noise_config(), "check");
        const TrainTestData data = load_datasets(cfg);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < cfg.eval_size; ++i)
            if (oracle.query(data.test.examples[i].features).label ==
                data.test.examples[i].label)
                ++correct;
        const double clean_acc = static_cast<double>(correct) / static_cast<double>(cfg.eval_size);

        bool saw_zero_row = false;
        std::istringstream lines(csv);
        std::string line;
        while (std::getline(lines, line)) {
            if (line.rfind("0,", 0) != 0) continue;
            saw_zero_row = true;
            std::istringstream cells(line);
            std::string cell;
            std::vector<std::string> fields;
            while (std::getline(cells, cell, ',')) fields.push_back(cell);
            REQUIRE_THAT(std::stod(fields[1]), WithinAbs(clean_acc, 1e-12));
            REQUIRE_THAT(std::stod(fields[1]) + std::stod(fields[3]), WithinAbs(1.0, 1e-12));
            REQUIRE(fields[4] == "checkpoint");
        }
        REQUIRE(saw_zero_row);

        execute_attack(cfg, {checkpoint});
        REQUIRE(slurp(written[0]) == csv);
    }
    SECTION("two victims become two tag groups in one table") {
        const std::string second = dir.file("victim_b.txt");
        fs::copy_file(checkpoint, second);
        const auto written = execute_attack(cfg, {checkpoint, second});
        const std::string csv = slurp(written[0]);
        REQUIRE_THAT(csv, ContainsSubstring(",checkpoint\n"));
        REQUIRE_THAT(csv, ContainsSubstring(",victim_b\n"));
    }
    SECTION("shape and format problems are checkpoint mismatches") {
        RunConfig wrong = cfg;
        wrong.num_classes = 4; // checkpoint was trained with 2
        REQUIRE_THROWS_AS(execute_attack(wrong, {checkpoint}), CheckpointMismatchError);
        const std::string junk = dir.file("junk.txt");
        spit(junk, "not a checkpoint\n");
        REQUIRE_THROWS_AS(execute_attack(cfg, {junk}), CheckpointMismatchError);
        REQUIRE_THROWS_AS(execute_attack(cfg, {}), ConfigError);
    }
}

TEST_CASE("output directory resolution") {
    RunConfig cfg;
    unsetenv(kOutputDirEnvVar);
    SECTION("explicit config value wins") {
        cfg.output_dir = "somewhere";
        setenv(kOutputDirEnvVar, "elsewhere", 1);
        REQUIRE(resolve_output_dir(cfg) == "somewhere");
        unsetenv(kOutputDirEnvVar);
    }
    SECTION("environment fills an empty value") {
        setenv(kOutputDirEnvVar, "elsewhere", 1);
        REQUIRE(resolve_output_dir(cfg) == "elsewhere");
        unsetenv(kOutputDirEnvVar);
    }
    SECTION("otherwise the working directory") { REQUIRE(resolve_output_dir(cfg) == "."); }
}

TEST_CASE("command-line binary") {
    TempDir dir("qfl_cfg_cli");
    const std::string config_path = dir.file("run.ini");
    spit(config_path, "[circuit]\nnum_qubits = 4\nnum_layers = 2\nnum_classes = 2\n"
                      "[noise]\nshots = 50\nlambda = 0.02\n"
                      "[train]\nnum_clients = 2\nnum_rounds = 2\nlocal_epochs = 1\n"
                      "batch_size = 8\nlearning_rate = 0.1\n"
                      "[data]\nsynthetic_per_class = 15\nsynthetic_test_per_class = 5\n"
                      "synthetic_feature_dim = 16\n"
                      "[attack]\nnum_queries = 60\neval_size = 10\nnoise_strengths = 0.0,0.2\n"
                      "[run]\nmaster_seed = 5\noutput_dir = " +
                          dir.file("out") + "\n");

    SECTION("train writes its artifacts and reruns byte-identically") {
        REQUIRE(run_cli("train --config " + config_path) == 0);
        const std::string first = slurp(dir.file("out/metrics.csv"));
        REQUIRE(run_cli("train --config " + config_path) == 0);
        REQUIRE(slurp(dir.file("out/metrics.csv")) == first);
        REQUIRE(run_cli("report --json " + dir.file("out/dp_report.json")) == 0);
    }
    SECTION("a bad value exits 1 and names the field") {
        std::string err;
        REQUIRE(run_cli("train --config " + config_path + " --set noise.lambda=-1", &err) == 1);
        REQUIRE_THAT(err, ContainsSubstring("noise.lambda"));
    }
    SECTION("a missing config file exits 1") {
        std::string err;
        REQUIRE(run_cli("train --config " + dir.file("absent.ini"), &err) == 1);
        REQUIRE_THAT(err, ContainsSubstring("config error"));
    }
    SECTION("a broken checkpoint exits 3") {
        spit(dir.file("junk.txt"), "nope\n");
        std::string err;
        REQUIRE(run_cli("attack --config " + config_path + " --checkpoint " +
                            dir.file("junk.txt"),
                        &err) == 3);
        REQUIRE_THAT(err, ContainsSubstring("checkpoint error"));
    }
    SECTION("dp-sweep honors the grid flags") {
        REQUIRE(run_cli("dp-sweep --config " + config_path +
                        " --shots 30 --lambdas 0.05 --out " + dir.file("sweep")) == 0);
        const std::string csv = slurp(dir.file("sweep/dp_sweep.csv"));
        std::size_t rows = 0;
        std::istringstream lines(csv);
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line[0] != 'M') ++rows;
        REQUIRE(rows == 1);
        REQUIRE_THAT(csv, ContainsSubstring("\n30,0.05,"));
    }
    SECTION("the environment variable supplies the default output directory") {
        const std::string env_config = dir.file("envrun.ini");
        spit(env_config, "[run]\nmaster_seed = 5\n");
        const std::string env_dir = dir.file("envout");
        const std::string cmd = std::string("env ") + kOutputDirEnvVar + "=" + env_dir + " " +
                                QFL_CLI_PATH + " dp-sweep --config " + env_config +
                                " >/dev/null 2>/dev/null";
        REQUIRE(std::system(cmd.c_str()) == 0);
        REQUIRE(fs::exists(env_dir + "/dp_sweep.csv"));
    }
}
