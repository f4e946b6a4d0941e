#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qfl/attack.hpp"
#include "qfl/config.hpp"
#include "qfl/data.hpp"
#include "qfl/dp.hpp"
#include "qfl/errors.hpp"
#include "qfl/fed.hpp"

namespace qfl {

/// Environment variable consulted when the config leaves output_dir empty.
inline constexpr const char* kOutputDirEnvVar = "QFL_OUT_DIR";

inline std::string resolve_output_dir(const RunConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv(kOutputDirEnvVar); env && *env) return env;
    return ".";
}

// ---------------------------------------------------------------------------
// Artifact preamble: every output embeds a schema tag plus the fully
// resolved config as comment lines, so any artifact can be reproduced by
// feeding its own embedded config back in.

inline std::string config_comment_block(const RunConfig& cfg, const std::string& schema) {
    std::string block = "# schema: " + schema + "\n# config-begin\n";
    std::istringstream lines(serialize_config(cfg));
    std::string line;
    while (std::getline(lines, line)) block += line.empty() ? "#\n" : "# " + line + "\n";
    block += "# config-end\n";
    return block;
}

/// Recover the config text embedded by config_comment_block.
inline std::string extract_embedded_config(const std::string& artifact_text) {
    std::istringstream lines(artifact_text);
    std::string line;
    std::string config;
    bool inside = false;
    while (std::getline(lines, line)) {
        if (line == "# config-begin") {
            inside = true;
        } else if (line == "# config-end") {
            return config;
        } else if (inside) {
            if (line.rfind("# ", 0) == 0)
                config += line.substr(2) + "\n";
            else if (line == "#")
                config += "\n";
        }
    }
    throw BadMagicError("no embedded config block found");
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary); // binary: LF line endings everywhere
    if (!out) throw TruncatedFileError("cannot write '" + path + "'");
    out << text;
}

/// The registry-rendered echo as structured JSON, one object per section.
inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
    nlohmann::ordered_json sections;
    for (const ConfigField& f : config_fields()) sections[f.section][f.key] = f.render(cfg);
    return sections;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dataset assembly.

struct TrainTestData {
    Dataset train;
    Dataset test;
};

/// Materialize the train/test sets named by the config, cap the training
/// set at subset_size, and check both against the circuit geometry so
/// mismatches fail fast with the config field spelled out.
inline TrainTestData load_datasets(const RunConfig& cfg) {
    TrainTestData data;
    if (cfg.source == "synthetic") {
        data.train = make_synthetic(cfg.num_classes, cfg.synthetic_per_class,
                                    cfg.synthetic_feature_dim, cfg.synthetic_separation,
                                    derive_seed(cfg.data_seed, 0));
        data.test = make_synthetic(cfg.num_classes, cfg.synthetic_test_per_class,
                                   cfg.synthetic_feature_dim, cfg.synthetic_separation,
                                   derive_seed(cfg.data_seed, 1));
    } else if (cfg.source == "csv") {
        data.train = load_dataset_csv(cfg.train_csv, cfg.num_classes);
        data.test = load_dataset_csv(cfg.test_csv, cfg.num_classes);
    } else {
        const auto [train_images, train_labels] = load_idx(cfg.train_images, cfg.train_labels);
        const auto [test_images, test_labels] = load_idx(cfg.test_images, cfg.test_labels);
        data.train = dataset_from_images(train_images, train_labels, cfg.num_classes);
        data.test = dataset_from_images(test_images, test_labels, cfg.num_classes);
    }

    if (cfg.subset_size > 0 && data.train.examples.size() > cfg.subset_size)
        data.train.examples.resize(cfg.subset_size);

    const std::uint64_t dim = std::uint64_t{1} << cfg.num_qubits;
    for (const Dataset* ds : {&data.train, &data.test}) {
        if (static_cast<std::uint64_t>(ds->feature_dim) > dim)
            throw ConfigError("circuit.num_qubits gives amplitude dimension " +
                              std::to_string(dim) + ", too small for " +
                              std::to_string(ds->feature_dim) + "-feature data");
        for (const LabeledExample& ex : ds->examples)
            if (ex.label < 0 || ex.label >= cfg.num_classes)
                throw ConfigError("circuit.num_classes = " + std::to_string(cfg.num_classes) +
                                  " but the data contains label " + std::to_string(ex.label));
    }
    return data;
}

// ---------------------------------------------------------------------------
// train: federated run -> metrics.csv, checkpoint.txt, dp_report.json.

inline std::vector<std::string> execute_train(RunConfig cfg) {
    cfg.validate();
    cfg.output_dir = resolve_output_dir(cfg); // echo the directory actually used
    const TrainTestData data = load_datasets(cfg);

    const TrainResult result = train(cfg.federation_config(), data.train, data.test);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const std::string metrics_path = (fs::path(cfg.output_dir) / "metrics.csv").string();
    const std::string checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint.txt").string();
    const std::string report_path = (fs::path(cfg.output_dir) / "dp_report.json").string();

    detail::write_text_file(metrics_path, config_comment_block(cfg, "qfl-metrics 1") +
                                              metrics_csv(result.metrics));

    write_checkpoint(checkpoint_path, result.params, cfg.num_classes, cfg.num_rounds);
    {
        std::ofstream append(checkpoint_path, std::ios::binary | std::ios::app);
        append << config_comment_block(cfg, "qfl-checkpoint 1");
    }

    nlohmann::ordered_json report;
    report["schema"] = "qfl-dp-report 1";
    report["config"] = detail::config_json(cfg);
    if (result.budget)
        report["accounting"] = budget_report(result.dp_params, *result.budget);
    else
        report["accounting"] = nullptr; // noiseless run: nothing to account for
    detail::write_text_file(report_path, report.dump(2) + "\n");

    return {metrics_path, checkpoint_path, report_path};
}

// ---------------------------------------------------------------------------
// dp-sweep: accountant grid -> dp_sweep.csv. Pure arithmetic, no training.

inline std::vector<std::string> execute_dp_sweep(RunConfig cfg) {
    cfg.validate();
    cfg.output_dir = resolve_output_dir(cfg);

    const std::vector<SweepRow> rows = sweep(cfg.sweep_shots, cfg.sweep_lambdas,
                                             cfg.sweep_params());
    std::string csv = config_comment_block(cfg, "qfl-dp-sweep 1");
    csv += std::string(kSweepCsvHeader) + "\n";
    for (const SweepRow& row : rows) csv += sweep_csv_row(row) + "\n";

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    const std::string path = (fs::path(cfg.output_dir) / "dp_sweep.csv").string();
    detail::write_text_file(path, csv);
    return {path};
}

// ---------------------------------------------------------------------------
// attack: checkpoints -> attack_report.csv (+ optional perturbed-input dumps).

namespace detail {

struct LoadedVictim {
    VictimOracle oracle;
    PqcArchitecture arch; // the checkpoint's shape, default for the substitute
    std::string tag;
};

/// Read one victim and verify it fits the configured task; any failure in
/// this phase is a checkpoint mismatch, not a generic runtime error.
inline LoadedVictim load_victim(const std::string& path, const RunConfig& cfg, int feature_dim,
                                const std::string& tag) {
    try {
        const Checkpoint ck = read_checkpoint(path);
        if (ck.num_classes != cfg.num_classes)
            throw ShapeMismatchError("checkpoint has " + std::to_string(ck.num_classes) +
                                     " classes, config expects " +
                                     std::to_string(cfg.num_classes));
        VictimOracle oracle = VictimOracle::from_checkpoint(ck, cfg.noise_config(), tag);
        if (feature_dim > oracle.max_feature_dim())
            throw ShapeMismatchError("checkpoint circuit takes at most " +
                                     std::to_string(oracle.max_feature_dim()) +
                                     " features, data has " + std::to_string(feature_dim));
        return {std::move(oracle), {ck.params.num_qubits, ck.params.num_layers}, tag};
    } catch (const CheckpointMismatchError&) {
        throw;
    } catch (const Error& e) {
        throw CheckpointMismatchError("checkpoint '" + path + "': " + e.what());
    }
}

inline std::string victim_tag(const std::string& path, std::vector<std::string>& used) {
    std::string tag = std::filesystem::path(path).stem().string();
    int copy = 1;
    std::string candidate = tag;
    while (std::find(used.begin(), used.end(), candidate) != used.end())
        candidate = tag + "-" + std::to_string(++copy);
    used.push_back(candidate);
    return candidate;
}

} // namespace detail

inline std::vector<std::string> execute_attack(RunConfig cfg,
                                               const std::vector<std::string>& checkpoint_paths) {
    cfg.validate();
    if (checkpoint_paths.empty())
        throw ConfigError("attack needs at least one victim checkpoint");
    cfg.output_dir = resolve_output_dir(cfg);
    const TrainTestData data = load_datasets(cfg);
    const int feature_dim = data.test.feature_dim;

    std::vector<detail::LoadedVictim> victims;
    std::vector<std::string> used_tags;
    for (const std::string& path : checkpoint_paths)
        victims.push_back(
            detail::load_victim(path, cfg, feature_dim, detail::victim_tag(path, used_tags)));

    std::span<const LabeledExample> eval_set(data.test.examples);
    if (cfg.eval_size > 0 && eval_set.size() > cfg.eval_size)
        eval_set = eval_set.subspan(0, cfg.eval_size);

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    std::vector<std::string> written;
    std::vector<std::pair<std::string, std::vector<AttackMetrics>>> tagged;
    const int side = static_cast<int>(std::lround(std::sqrt(feature_dim)));
    for (const detail::LoadedVictim& victim : victims) {
        AttackConfig acfg;
        acfg.num_queries = cfg.num_queries;
        // zero means: mirror the victim's shape
        acfg.substitute_arch.num_qubits =
            cfg.substitute_qubits ? cfg.substitute_qubits : victim.arch.num_qubits;
        acfg.substitute_arch.num_layers =
            cfg.substitute_layers ? cfg.substitute_layers : victim.arch.num_layers;
        acfg.substitute_epochs = cfg.substitute_epochs;
        acfg.substitute_lr = cfg.substitute_lr;
        acfg.substitute_batch = cfg.substitute_batch;
        acfg.noise_strengths = cfg.noise_strengths;
        acfg.seed = cfg.attack_seed;

        const AttackRun run =
            run_attack(victim.oracle, eval_set, data.train.examples, acfg);
        tagged.emplace_back(victim.tag, run.per_strength);

        if (cfg.dump_images && side >= 1 && side * side == feature_dim) {
            const std::string pgm =
                (fs::path(cfg.output_dir) / ("adv_" + victim.tag + ".pgm")).string();
            // show the strongest perturbation: the last strength's batch
            const std::size_t batch = eval_set.size();
            std::span<const AdvExample> strongest(run.examples);
            strongest = strongest.subspan(strongest.size() - batch, batch);
            dump_adversarial_pgm(pgm, strongest, side, side);
            written.push_back(pgm);
        }
    }

    const std::string report_path = (fs::path(cfg.output_dir) / "attack_report.csv").string();
    detail::write_text_file(report_path, config_comment_block(cfg, "qfl-attack-report 1") +
                                             attack_report_csv(tagged));
    written.insert(written.begin(), report_path);
    return written;
}

// ---------------------------------------------------------------------------
// report: pretty-print a dp_report.json.

inline std::string render_report(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in) throw TruncatedFileError("cannot open '" + json_path + "'");
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw BadMagicError("'" + json_path + "' is not valid JSON: " + e.what());
    }
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Exit-code policy shared by every subcommand: 0 success, 1 config error,
// 2 runtime error, 3 checkpoint mismatch.

namespace detail {

template <typename Fn>
int run_command(std::ostream& err, Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const CheckpointMismatchError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace detail

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
                     std::ostream& out, std::ostream& err) {
    return detail::run_command(err, [&] {
        for (const std::string& path : execute_train(load_config(config_path, overrides)))
            out << "wrote " << path << "\n";
    });
}

inline int cmd_dp_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
                        std::ostream& out, std::ostream& err) {
    return detail::run_command(err, [&] {
        for (const std::string& path : execute_dp_sweep(load_config(config_path, overrides)))
            out << "wrote " << path << "\n";
    });
}

inline int cmd_attack(const std::string& config_path, const std::vector<std::string>& overrides,
                      const std::vector<std::string>& checkpoint_paths, std::ostream& out,
                      std::ostream& err) {
    return detail::run_command(err, [&] {
        for (const std::string& path :
             execute_attack(load_config(config_path, overrides), checkpoint_paths))
            out << "wrote " << path << "\n";
    });
}

inline int cmd_report(const std::string& json_path, std::ostream& out, std::ostream& err) {
    return detail::run_command(err, [&] { out << render_report(json_path); });
}

} // namespace qfl
