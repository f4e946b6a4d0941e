// End-to-end walkthrough of the library API, no CLI involved: train two
// clients on synthetic blobs with shot + depolarizing noise, print the
// privacy budget the run earned, then attack the result with black-box
// FGSM and print how the accuracy degrades with perturbation strength.
//
// Runs in a few seconds; every number is reproducible from the seeds.

#include <cstdio>

#include "qfl/qfl.hpp"

int main() {
    using namespace qfl;

    // A 4-qubit, 2-layer classifier reading 16-feature inputs into 2 classes,
    // simulated with 200 measurement shots and depolarizing strength 0.01.
    FederationConfig cfg;
    cfg.num_clients = 2;
    cfg.num_rounds = 8;
    cfg.local_epochs = 2;
    cfg.classifier.arch = {4, 2};
    cfg.classifier.num_classes = 2;
    cfg.classifier.noise = NoiseConfig::finite(200, 0.01);
    cfg.classifier.learning_rate = 0.1;
    cfg.classifier.batch_size = 16;
    cfg.master_seed = 2024;

    const Dataset train_set = make_synthetic(2, 50, 16, 0.5, 7);
    const Dataset test_set = make_synthetic(2, 20, 16, 0.5, 8);

    std::printf("round  train_loss  train_acc  test_acc\n");
    const TrainResult result = train(cfg, train_set, test_set);
    for (const RoundMetrics& r : result.metrics)
        std::printf("%5d  %10.4f  %9.3f  %8.3f\n", r.round, r.mean_train_loss,
                    r.mean_train_acc, r.test_acc);

    if (result.budget) {
        std::printf("\nprivacy budget earned by the noise in this run:\n");
        std::printf("  sigma         = %.6g\n", result.budget->sigma);
        std::printf("  epsilon/round = %.6g\n", result.budget->epsilon_round);
        std::printf("  epsilon_total = %.6g  (delta_total = %.3g)\n",
                    result.budget->epsilon_total, result.budget->delta_total);
    }

    // Attack the trained model through its label-and-confidence interface.
    const VictimOracle victim(result.params, cfg.classifier, "demo");
    AttackConfig acfg;
    acfg.num_queries = 200;
    acfg.substitute_arch = cfg.classifier.arch;
    acfg.noise_strengths = {0.0, 0.08, 0.12, 0.16, 0.20};
    const AttackRun attack = run_attack(victim, test_set.examples, train_set.examples, acfg);

    std::printf("\nsubstitute agreement with victim: %.2f\n", attack.substitute_agreement);
    std::printf("    E  adv_accuracy  attack_success\n");
    for (const AttackMetrics& m : attack.per_strength)
        std::printf("%5.2f  %12.3f  %14.3f\n", m.noise_strength, m.adv_accuracy, m.asr);
    return 0;
}
