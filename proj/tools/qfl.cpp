// Command-line front end: train a federated quantum classifier, sweep the
// privacy accountant, evaluate black-box attacks, and pretty-print reports.
//
// Exit codes: 0 success, 1 config error, 2 runtime error, 3 checkpoint
// mismatch. Config precedence: defaults < config file < --set overrides
// (and --out, which is shorthand for --set run.output_dir=...).

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qfl/qfl.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federated quantum classifier laboratory with differential-privacy accounting"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string json_path;
    std::vector<std::string> overrides;
    std::vector<std::string> checkpoints;
    std::string sweep_shots;
    std::string sweep_lambdas;

    const auto add_config_options = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "Run configuration file")
            ->required();
        cmd->add_option("-s,--set", overrides,
                        "Override one config value (section.key=value, repeatable)");
        cmd->add_option("-o,--out", out_dir, "Output directory (overrides run.output_dir)");
    };

    CLI::App* train = app.add_subcommand(
        "train", "Run federated training; writes metrics.csv, checkpoint.txt, dp_report.json");
    add_config_options(train);

    CLI::App* dp_sweep = app.add_subcommand(
        "dp-sweep", "Evaluate the privacy budget over a shots x lambda grid; writes dp_sweep.csv");
    add_config_options(dp_sweep);
    dp_sweep->add_option("--shots", sweep_shots, "Shot grid (comma-separated, overrides config)");
    dp_sweep->add_option("--lambdas", sweep_lambdas,
                         "Depolarizing grid (comma-separated, overrides config)");

    CLI::App* attack = app.add_subcommand(
        "attack", "Black-box FGSM evaluation of trained victims; writes attack_report.csv");
    add_config_options(attack);
    attack->add_option("-k,--checkpoint", checkpoints, "Victim checkpoint (repeatable)")
        ->required();

    CLI::App* report = app.add_subcommand("report", "Pretty-print a dp_report.json");
    report->add_option("-j,--json", json_path, "Report file to print")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // help text, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    if (!sweep_shots.empty()) overrides.push_back("sweep.shots=" + sweep_shots);
    if (!sweep_lambdas.empty()) overrides.push_back("sweep.lambdas=" + sweep_lambdas);
    if (!out_dir.empty()) overrides.push_back("run.output_dir=" + out_dir);

    if (train->parsed())
        return qfl::cmd_train(config_path, overrides, std::cout, std::cerr);
    if (dp_sweep->parsed())
        return qfl::cmd_dp_sweep(config_path, overrides, std::cout, std::cerr);
    if (attack->parsed())
        return qfl::cmd_attack(config_path, overrides, checkpoints, std::cout, std::cerr);
    return qfl::cmd_report(json_path, std::cout, std::cerr);
}
