#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qfl/errors.hpp"
#include "qfl/fed.hpp"
#include "qfl/format.hpp"

namespace qfl {

/// Every tunable of a run, across all modules, in one flat struct. Loaded
/// from a sectioned `key = value` text file; command-line `--set` entries
/// override file values, which override the defaults below. The defaults
/// describe a 10-client, 50-round, 8-qubit run on 16x16 inputs; small
/// configs shrink it via subset_size or the synthetic generator.
struct RunConfig {
    // [circuit]
    int num_qubits = 8;
    int num_layers = 3;
    int num_classes = 10;

    // [noise]
    std::uint64_t shots = 60;
    double lambda = 0.05;
    double lambda_min = 0.001;
    bool allow_noiseless = false;

    // [train]
    int num_clients = 10;
    int num_rounds = 50;
    int local_epochs = 5;
    int batch_size = 64;
    double learning_rate = 0.01;
    double grad_clip = 0.8;
    bool use_adam = false;
    bool eval_with_shots = false;

    // [privacy]
    double grad_bound = 1.0;
    double delta_total = 1e-5;
    VarianceMode variance_mode = VarianceMode::kPaperLinearRate;
    std::uint64_t sweep_dataset_size = 6000; // |D| assumed by dp-sweep (no data loaded)

    // [data]
    std::string source = "synthetic"; // synthetic | csv | idx
    PartitionStrategy partition = PartitionStrategy::kIid;
    std::uint64_t subset_size = 0; // cap on training examples; 0 = use all
    std::uint64_t data_seed = 42;
    int synthetic_per_class = 50;
    int synthetic_test_per_class = 10;
    int synthetic_feature_dim = 256;
    double synthetic_separation = 0.5;
    std::string train_csv;
    std::string test_csv;
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;

    // [sweep]
    std::vector<std::uint64_t> sweep_shots{30, 60, 100, 300, 1000};
    std::vector<double> sweep_lambdas{0.01, 0.05, 0.1};

    // [attack]
    int num_queries = 1000;
    int substitute_qubits = 0; // 0 = mirror the victim's architecture
    int substitute_layers = 0;
    int substitute_epochs = 10;
    double substitute_lr = 0.1;
    int substitute_batch = 16;
    std::vector<double> noise_strengths{0.12, 0.14, 0.16, 0.18, 0.20};
    std::uint64_t eval_size = 50; // adversarial evaluation examples; 0 = whole test set
    std::uint64_t attack_seed = 1;
    bool dump_images = false;

    // [run]
    std::uint64_t master_seed = 1;
    int parallelism = 1;
    std::string output_dir;

    void validate() const;

    NoiseConfig noise_config() const {
        NoiseConfig n;
        n.shots = shots;
        n.lambda = lambda;
        n.lambda_min = lambda_min;
        n.allow_noiseless = allow_noiseless;
        return n;
    }

    ClassifierConfig classifier_config() const {
        ClassifierConfig c;
        c.arch = {num_qubits, num_layers};
        c.num_classes = num_classes;
        c.noise = noise_config();
        c.grad_clip = grad_clip;
        c.learning_rate = learning_rate;
        c.grad_bound = grad_bound;
        c.batch_size = batch_size;
        c.use_adam = use_adam;
        return c;
    }

    FederationConfig federation_config() const {
        FederationConfig f;
        f.num_clients = num_clients;
        f.num_rounds = num_rounds;
        f.local_epochs = local_epochs;
        f.classifier = classifier_config();
        f.master_seed = master_seed;
        f.partition = partition;
        f.parallelism = parallelism;
        f.eval_with_shots = eval_with_shots;
        f.delta_total = delta_total;
        f.variance_mode = variance_mode;
        return f;
    }

    /// Accountant inputs for the standalone sweep, which runs without any
    /// dataset; the per-client dataset size comes from sweep_dataset_size.
    DpParams sweep_params() const {
        DpParams dp;
        dp.num_qubits = num_qubits;
        dp.num_layers = num_layers;
        dp.shots = shots;
        dp.lambda = noise_config().effective_lambda();
        dp.grad_bound = grad_bound;
        dp.learning_rate = learning_rate;
        dp.local_epochs = local_epochs;
        dp.clip = grad_clip;
        dp.local_dataset_size = sweep_dataset_size;
        dp.num_clients = num_clients;
        dp.num_rounds = num_rounds;
        dp.variance_mode = variance_mode;
        dp.split_delta(delta_total);
        return dp;
    }
};

namespace detail {

// ---------------------------------------------------------------------------
// Field registry: one row per config key, with a parser and a renderer, so
// reading, echoing, and unknown-key detection all share a single table.

struct ConfigField {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> parse;
    std::function<std::string(const RunConfig&)> render;

    std::string path() const { return section + "." + key; }
};

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

inline long long parse_integer(const std::string& text, const std::string& field) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(field + " expects an integer, got '" + text + "'");
    }
}

inline double parse_number(const std::string& text, const std::string& field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(field + " expects a finite number, got '" + text + "'");
    }
}

inline bool parse_flag(const std::string& text, const std::string& field) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(field + " expects true or false, got '" + text + "'");
}

inline std::vector<std::string> split_list(const std::string& text, const std::string& field) {
    std::vector<std::string> items;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(field + " has an empty list entry");
        items.push_back(item);
    }
    if (items.empty()) throw ConfigError(field + " expects a comma-separated list");
    return items;
}

template <typename Int>
ConfigField bind_int(const char* section, const char* key, Int RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    const std::string path = f.path();
    f.parse = [member, path](RunConfig& cfg, const std::string& text) {
        const long long v = parse_integer(text, path);
        if (std::is_unsigned_v<Int> && v < 0)
            throw ConfigError(path + " must be nonnegative, got '" + text + "'");
        cfg.*member = static_cast<Int>(v);
    };
    f.render = [member](const RunConfig& cfg) { return std::to_string(cfg.*member); };
    return f;
}

inline ConfigField bind_double(const char* section, const char* key, double RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    const std::string path = f.path();
    f.parse = [member, path](RunConfig& cfg, const std::string& text) {
        cfg.*member = parse_number(text, path);
    };
    f.render = [member](const RunConfig& cfg) { return format_shortest(cfg.*member); };
    return f;
}

inline ConfigField bind_flag(const char* section, const char* key, bool RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    const std::string path = f.path();
    f.parse = [member, path](RunConfig& cfg, const std::string& text) {
        cfg.*member = parse_flag(text, path);
    };
    f.render = [member](const RunConfig& cfg) { return cfg.*member ? "true" : "false"; };
    return f;
}

inline ConfigField bind_string(const char* section, const char* key,
                               std::string RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    f.parse = [member](RunConfig& cfg, const std::string& text) { cfg.*member = text; };
    f.render = [member](const RunConfig& cfg) { return cfg.*member; };
    return f;
}

inline ConfigField bind_shot_list(const char* section, const char* key,
                                  std::vector<std::uint64_t> RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    const std::string path = f.path();
    f.parse = [member, path](RunConfig& cfg, const std::string& text) {
        std::vector<std::uint64_t> values;
        for (const std::string& item : split_list(text, path)) {
            const long long v = parse_integer(item, path);
            if (v < 0) throw ConfigError(path + " entries must be nonnegative");
            values.push_back(static_cast<std::uint64_t>(v));
        }
        cfg.*member = std::move(values);
    };
    f.render = [member](const RunConfig& cfg) {
        std::string out;
        for (std::uint64_t v : cfg.*member) {
            if (!out.empty()) out += ",";
            out += std::to_string(v);
        }
        return out;
    };
    return f;
}

inline ConfigField bind_double_list(const char* section, const char* key,
                                    std::vector<double> RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    const std::string path = f.path();
    f.parse = [member, path](RunConfig& cfg, const std::string& text) {
        std::vector<double> values;
        for (const std::string& item : split_list(text, path))
            values.push_back(parse_number(item, path));
        cfg.*member = std::move(values);
    };
    f.render = [member](const RunConfig& cfg) {
        std::string out;
        for (double v : cfg.*member) {
            if (!out.empty()) out += ",";
            out += format_shortest(v);
        }
        return out;
    };
    return f;
}

inline ConfigField bind_variance_mode(const char* section, const char* key,
                                      VarianceMode RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    f.parse = [member](RunConfig& cfg, const std::string& text) {
        cfg.*member = variance_mode_from_string(text);
    };
    f.render = [member](const RunConfig& cfg) { return to_string(cfg.*member); };
    return f;
}

inline ConfigField bind_partition(const char* section, const char* key,
                                  PartitionStrategy RunConfig::* member) {
    ConfigField f{section, key, nullptr, nullptr};
    f.parse = [member](RunConfig& cfg, const std::string& text) {
        cfg.*member = partition_strategy_from_string(text);
    };
    f.render = [member](const RunConfig& cfg) { return to_string(cfg.*member); };
    return f;
}

/// The full key table, in canonical echo order.
inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        bind_int("circuit", "num_qubits", &RunConfig::num_qubits),
        bind_int("circuit", "num_layers", &RunConfig::num_layers),
        bind_int("circuit", "num_classes", &RunConfig::num_classes),

        bind_int("noise", "shots", &RunConfig::shots),
        bind_double("noise", "lambda", &RunConfig::lambda),
        bind_double("noise", "lambda_min", &RunConfig::lambda_min),
        bind_flag("noise", "allow_noiseless", &RunConfig::allow_noiseless),

        bind_int("train", "num_clients", &RunConfig::num_clients),
        bind_int("train", "num_rounds", &RunConfig::num_rounds),
        bind_int("train", "local_epochs", &RunConfig::local_epochs),
        bind_int("train", "batch_size", &RunConfig::batch_size),
        bind_double("train", "learning_rate", &RunConfig::learning_rate),
        bind_double("train", "grad_clip", &RunConfig::grad_clip),
        bind_flag("train", "use_adam", &RunConfig::use_adam),
        bind_flag("train", "eval_with_shots", &RunConfig::eval_with_shots),

        bind_double("privacy", "grad_bound", &RunConfig::grad_bound),
        bind_double("privacy", "delta_total", &RunConfig::delta_total),
        bind_variance_mode("privacy", "variance_mode", &RunConfig::variance_mode),
        bind_int("privacy", "sweep_dataset_size", &RunConfig::sweep_dataset_size),

        bind_string("data", "source", &RunConfig::source),
        bind_partition("data", "partition", &RunConfig::partition),
        bind_int("data", "subset_size", &RunConfig::subset_size),
        bind_int("data", "data_seed", &RunConfig::data_seed),
        bind_int("data", "synthetic_per_class", &RunConfig::synthetic_per_class),
        bind_int("data", "synthetic_test_per_class", &RunConfig::synthetic_test_per_class),
        bind_int("data", "synthetic_feature_dim", &RunConfig::synthetic_feature_dim),
        bind_double("data", "synthetic_separation", &RunConfig::synthetic_separation),
        bind_string("data", "train_csv", &RunConfig::train_csv),
        bind_string("data", "test_csv", &RunConfig::test_csv),
        bind_string("data", "train_images", &RunConfig::train_images),
        bind_string("data", "train_labels", &RunConfig::train_labels),
        bind_string("data", "test_images", &RunConfig::test_images),
        bind_string("data", "test_labels", &RunConfig::test_labels),

        bind_shot_list("sweep", "shots", &RunConfig::sweep_shots),
        bind_double_list("sweep", "lambdas", &RunConfig::sweep_lambdas),

        bind_int("attack", "num_queries", &RunConfig::num_queries),
        bind_int("attack", "substitute_qubits", &RunConfig::substitute_qubits),
        bind_int("attack", "substitute_layers", &RunConfig::substitute_layers),
        bind_int("attack", "substitute_epochs", &RunConfig::substitute_epochs),
        bind_double("attack", "substitute_lr", &RunConfig::substitute_lr),
        bind_int("attack", "substitute_batch", &RunConfig::substitute_batch),
        bind_double_list("attack", "noise_strengths", &RunConfig::noise_strengths),
        bind_int("attack", "eval_size", &RunConfig::eval_size),
        bind_int("attack", "attack_seed", &RunConfig::attack_seed),
        bind_flag("attack", "dump_images", &RunConfig::dump_images),

        bind_int("run", "master_seed", &RunConfig::master_seed),
        bind_int("run", "parallelism", &RunConfig::parallelism),
        bind_string("run", "output_dir", &RunConfig::output_dir),
    };
    return fields;
}

inline const ConfigField* find_field(const std::string& path) {
    static const std::map<std::string, const ConfigField*> index = [] {
        std::map<std::string, const ConfigField*> m;
        for (const ConfigField& f : config_fields()) m[f.path()] = &f;
        return m;
    }();
    const auto it = index.find(path);
    return it == index.end() ? nullptr : it->second;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Text format: `[section]` headers, `key = value` lines, `#` comments,
// later entries override earlier ones.

/// Parse sectioned key = value text into section-qualified entries.
inline std::map<std::string, std::string> parse_config_entries(const std::string& text) {
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": missing key");
        if (section.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key +
                              "' appears before any [section] header");
        entries[section + "." + key] = detail::trim(line.substr(eq + 1));
    }
    return entries;
}

/// Apply section-qualified entries onto a config; unknown keys are errors.
inline void apply_config_entries(RunConfig& cfg,
                                 const std::map<std::string, std::string>& entries) {
    for (const auto& [path, value] : entries) {
        const detail::ConfigField* field = detail::find_field(path);
        if (!field) throw ConfigError("unknown config key '" + path + "'");
        field->parse(cfg, value);
    }
}

/// Defaults overlaid with the entries found in `text`.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    apply_config_entries(cfg, parse_config_entries(text));
    return cfg;
}

/// One `section.key=value` per override, applied after the file.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    std::map<std::string, std::string> entries;
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + item + "' must look like section.key=value");
        const std::string path = detail::trim(item.substr(0, eq));
        if (!detail::find_field(path)) throw ConfigError("unknown config key '" + path + "'");
        entries[path] = detail::trim(item.substr(eq + 1));
    }
    apply_config_entries(cfg, entries);
}

/// Read a config file and apply overrides on top. The result is validated.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig cfg = parse_config(text.str());
    apply_overrides(cfg, overrides);
    cfg.validate();
    return cfg;
}

/// Canonical echo of every field, grouped by section. Parsing this text
/// back reproduces the config exactly (doubles render round-trippably).
inline std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const detail::ConfigField& f : detail::config_fields()) {
        if (f.section != section) {
            if (!out.empty()) out += "\n";
            out += "[" + f.section + "]\n";
            section = f.section;
        }
        out += f.key + " = " + f.render(cfg) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

inline void RunConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw ConfigError(msg); };

    if (num_qubits < 1 || num_qubits > kMaxQubits)
        fail("circuit.num_qubits must be in [1, 14]");
    if (num_layers < 1) fail("circuit.num_layers must be >= 1");
    const std::uint64_t dim = std::uint64_t{1} << num_qubits;
    if (num_classes < 2 || static_cast<std::uint64_t>(num_classes) > dim)
        fail("circuit.num_classes must be in [2, 2^num_qubits]");

    if (lambda < 0.0 || lambda > 1.0) fail("noise.lambda must be in [0, 1]");
    if (lambda_min < 0.0 || lambda_min > 1.0) fail("noise.lambda_min must be in [0, 1]");

    if (num_clients < 1) fail("train.num_clients must be >= 1");
    if (num_rounds < 1) fail("train.num_rounds must be >= 1");
    if (local_epochs < 1) fail("train.local_epochs must be >= 1");
    if (batch_size < 1) fail("train.batch_size must be >= 1");
    if (learning_rate <= 0.0) fail("train.learning_rate must be positive");
    if (grad_clip <= 0.0) fail("train.grad_clip must be positive");

    if (grad_bound <= 0.0) fail("privacy.grad_bound must be positive");
    if (delta_total <= 0.0 || delta_total >= 1.0) fail("privacy.delta_total must be in (0, 1)");
    if (sweep_dataset_size < 1) fail("privacy.sweep_dataset_size must be >= 1");

    if (source != "synthetic" && source != "csv" && source != "idx")
        fail("data.source must be synthetic, csv, or idx");
    if (source == "synthetic") {
        if (synthetic_per_class < 1) fail("data.synthetic_per_class must be >= 1");
        if (synthetic_test_per_class < 1) fail("data.synthetic_test_per_class must be >= 1");
        if (synthetic_feature_dim < num_classes)
            fail("data.synthetic_feature_dim must be >= circuit.num_classes");
        if (static_cast<std::uint64_t>(synthetic_feature_dim) > dim)
            fail("data.synthetic_feature_dim must be <= 2^num_qubits");
        if (synthetic_separation < 0.0) fail("data.synthetic_separation must be nonnegative");
    } else if (source == "csv") {
        if (train_csv.empty()) fail("data.train_csv is required when data.source = csv");
        if (test_csv.empty()) fail("data.test_csv is required when data.source = csv");
    } else {
        if (train_images.empty()) fail("data.train_images is required when data.source = idx");
        if (train_labels.empty()) fail("data.train_labels is required when data.source = idx");
        if (test_images.empty()) fail("data.test_images is required when data.source = idx");
        if (test_labels.empty()) fail("data.test_labels is required when data.source = idx");
    }

    if (sweep_shots.empty()) fail("sweep.shots must list at least one shot count");
    for (std::uint64_t m : sweep_shots)
        if (m < 1) fail("sweep.shots entries must be >= 1");
    if (sweep_lambdas.empty()) fail("sweep.lambdas must list at least one value");
    for (double l : sweep_lambdas)
        if (l <= 0.0 || l > 1.0) fail("sweep.lambdas entries must be in (0, 1]");

    if (num_queries < num_classes) fail("attack.num_queries must be >= circuit.num_classes");
    if (substitute_qubits < 0 || substitute_qubits > kMaxQubits)
        fail("attack.substitute_qubits must be in [0, 14] (0 mirrors the victim)");
    if (substitute_layers < 0) fail("attack.substitute_layers must be >= 0 (0 mirrors the victim)");
    if (substitute_epochs < 0) fail("attack.substitute_epochs must be >= 0");
    if (substitute_lr <= 0.0) fail("attack.substitute_lr must be positive");
    if (substitute_batch < 1) fail("attack.substitute_batch must be >= 1");
    if (noise_strengths.empty()) fail("attack.noise_strengths must list at least one value");
    for (double e : noise_strengths)
        if (e < 0.0) fail("attack.noise_strengths entries must be nonnegative");

    if (parallelism < 1) fail("run.parallelism must be >= 1");
}

} // namespace qfl
