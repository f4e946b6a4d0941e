#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfl/errors.hpp"
#include "qfl/format.hpp"
#include "qfl/statevec.hpp"

namespace qfl {

/// Which variance law the accountant uses for the aggregate update noise.
/// kPaperLinearRate uses K*eta*Var (the published form); kDerivedSquaredRate
/// uses K*eta^2*Var (the variance of -eta * sum of K independent gradient
/// estimates). They differ by exactly a factor of eta.
enum class VarianceMode { kPaperLinearRate, kDerivedSquaredRate };

inline std::string to_string(VarianceMode m) {
    return m == VarianceMode::kPaperLinearRate ? "PAPER" : "DERIVED";
}

inline VarianceMode variance_mode_from_string(const std::string& s) {
    if (s == "PAPER") return VarianceMode::kPaperLinearRate;
    if (s == "DERIVED") return VarianceMode::kDerivedSquaredRate;
    throw ConfigError("variance_mode must be PAPER or DERIVED, got '" + s + "'");
}

/// Everything the accountant needs: circuit shape, measurement noise, the
/// training schedule, and the composition targets.
struct DpParams {
    int num_qubits = 8;
    int num_layers = 3;
    std::uint64_t shots = 60;
    double lambda = 0.05;
    double grad_bound = 1.0;     // bound B on |dloss/dexpectation|
    double learning_rate = 0.01;
    int local_epochs = 5;
    double clip = 0.8;
    std::uint64_t local_dataset_size = 6000;
    int num_clients = 10;
    int num_rounds = 50;
    double delta_per_round = 0.0; // delta in the per-round Gaussian guarantee
    double delta_prime = 0.0;     // slack delta' spent by advanced composition
    VarianceMode variance_mode = VarianceMode::kPaperLinearRate;

    /// Allocate a total failure probability across the composition:
    /// delta' = delta_total / 2 and delta = delta_total / (2NT), so that
    /// NT*delta + delta' = delta_total exactly.
    void split_delta(double delta_total) {
        const double nt = static_cast<double>(num_clients) * num_rounds;
        delta_prime = delta_total / 2.0;
        delta_per_round = delta_total / (2.0 * nt);
    }

    void validate() const {
        if (num_qubits < 1 || num_qubits > kMaxQubits)
            throw ConfigError("num_qubits must be in [1, 14]");
        if (num_layers < 1) throw ConfigError("num_layers must be positive");
        if (shots < 1) throw ConfigError("shots must be >= 1 for accounting");
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
        if (grad_bound <= 0.0) throw ConfigError("grad_bound must be positive");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (local_epochs < 1) throw ConfigError("local_epochs must be positive");
        if (clip < 0.0) throw ConfigError("clip must be nonnegative");
        if (local_dataset_size < 1) throw ConfigError("local_dataset_size must be positive");
        if (num_clients < 1 || num_rounds < 1)
            throw ConfigError("num_clients and num_rounds must be positive");
        if (delta_per_round <= 0.0 || delta_per_round >= 1.0)
            throw ConfigError("delta_per_round must be in (0, 1)");
        if (delta_prime <= 0.0 || delta_prime >= 1.0)
            throw ConfigError("delta_prime must be in (0, 1)");
        const double nt = static_cast<double>(num_clients) * num_rounds;
        if (nt * delta_per_round + delta_prime >= 1.0)
            throw ConfigError("NT*delta + delta' must stay below 1");
    }
};

/// Fully evaluated privacy budget for one schedule.
struct DpBudget {
    double per_point_grad_var = 0.0;   // one data point, one component
    double per_example_noise_var = 0.0; // dataset-averaged bound
    double total_update_var = 0.0;     // across K local epochs
    double sigma = 0.0;
    double sensitivity = 0.0;          // neighboring-dataset update gap
    double epsilon_round = 0.0;
    double epsilon_total = 0.0;
    double delta_total = 0.0;
};

// ---------------------------------------------------------------------------
// Closed forms.

/// Shot-noise variance bound Tr(O^2)/M = 2^D/M for the Pauli observable.
inline double shot_variance(int num_qubits, std::uint64_t shots) {
    return static_cast<double>(std::uint64_t{1} << num_qubits) / static_cast<double>(shots);
}

/// Depolarizing-noise variance of one gradient component for a single data
/// point: 2^D * c(p) / (2M).
inline double per_point_gradient_variance(const DpParams& dp) {
    const double p = cumulative_depolarizing_p(dp.lambda, dp.num_layers);
    return static_cast<double>(std::uint64_t{1} << dp.num_qubits) * variance_scaling_c(p) /
           (2.0 * static_cast<double>(dp.shots));
}

/// Dataset-averaged gradient-noise bound: 2^D * B^2 * c(p) / (2M * |D|).
inline double gradient_noise_variance(const DpParams& dp) {
    return per_point_gradient_variance(dp) * dp.grad_bound * dp.grad_bound /
           static_cast<double>(dp.local_dataset_size);
}

/// Aggregate update-noise variance over K local epochs. The linear-rate
/// mode multiplies by K*eta (published form); the squared-rate mode by
/// K*eta^2 (what -eta * sum of K independent estimates actually has).
inline double total_update_variance(const DpParams& dp) {
    const double var = gradient_noise_variance(dp);
    const double k = static_cast<double>(dp.local_epochs);
    return dp.variance_mode == VarianceMode::kPaperLinearRate
               ? k * dp.learning_rate * var
               : k * dp.learning_rate * dp.learning_rate * var;
}

/// L2 gap between updates trained on neighboring datasets:
/// eta * K * 2 * clip / |D|.
inline double sensitivity(const DpParams& dp) {
    return dp.learning_rate * static_cast<double>(dp.local_epochs) * 2.0 * dp.clip /
           static_cast<double>(dp.local_dataset_size);
}

/// Gaussian-mechanism budget for one client-round:
/// epsilon = (sensitivity / sigma) * sqrt(2 ln(1.25 / delta)).
inline double epsilon_round(const DpParams& dp) {
    const double var = total_update_variance(dp);
    if (var <= 0.0)
        throw ZeroSigmaError("update noise variance is zero; a noiseless run cannot be "
                             "certified private");
    const double sigma = std::sqrt(var);
    return sensitivity(dp) / sigma * std::sqrt(2.0 * std::log(1.25 / dp.delta_per_round));
}

/// Advanced composition over N*T client-rounds:
/// eps_total = sqrt(2NT ln(1/delta')) * eps + NT * eps * (e^eps - 1) / 2,
/// delta_total = NT * delta + delta'.
inline DpBudget compose(const DpParams& dp, double eps_round) {
    const double nt = static_cast<double>(dp.num_clients) * dp.num_rounds;
    DpBudget b;
    b.per_point_grad_var = per_point_gradient_variance(dp);
    b.per_example_noise_var = gradient_noise_variance(dp);
    b.total_update_var = total_update_variance(dp);
    b.sigma = std::sqrt(b.total_update_var);
    b.sensitivity = sensitivity(dp);
    b.epsilon_round = eps_round;
    b.epsilon_total = std::sqrt(2.0 * nt * std::log(1.0 / dp.delta_prime)) * eps_round +
                      nt * eps_round * (std::expm1(eps_round)) / 2.0;
    b.delta_total = nt * dp.delta_per_round + dp.delta_prime;
    return b;
}

/// One-call evaluation of the full budget.
inline DpBudget compute_budget(const DpParams& dp) {
    dp.validate();
    return compose(dp, epsilon_round(dp));
}

// ---------------------------------------------------------------------------
// Inverse solvers.

inline constexpr std::uint64_t kMaxSolverShots = 1000000;

/// Smallest shot count whose total budget reaches `target` (epsilon_total
/// is strictly increasing in M). Throws Unachievable when no M in
/// [1, 10^6] brackets the target.
inline std::uint64_t solve_shots_for_epsilon(double target, DpParams dp) {
    auto eps_at = [&dp](std::uint64_t m) {
        dp.shots = m;
        return compute_budget(dp).epsilon_total;
    };
    const double lo_eps = eps_at(1);
    const double hi_eps = eps_at(kMaxSolverShots);
    if (target < lo_eps || target > hi_eps)
        throw UnachievableError("target epsilon_total " + format_value(target) +
                                " outside achievable range [" + format_value(lo_eps) + ", " +
                                format_value(hi_eps) + "] for shots in [1, 1000000]");
    std::uint64_t lo = 1, hi = kMaxSolverShots;
    // Invariant: eps(lo) <= target <= eps(hi).
    while (hi - lo > 1) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (eps_at(mid) <= target)
            lo = mid;
        else
            hi = mid;
    }
    // Return whichever neighbor lands closer to the target.
    return (target - eps_at(lo) <= eps_at(hi) - target) ? lo : hi;
}

/// Fit the loss-gradient bound B so that the budget hits `target` for this
/// schedule (epsilon_total is strictly decreasing in B). Used to anchor
/// reported absolute budgets to one reference row; cross-row comparisons
/// are then meaningful as ratios.
inline double calibrate_grad_bound(double target, DpParams dp) {
    auto eps_at = [&dp](double b) {
        dp.grad_bound = b;
        return compute_budget(dp).epsilon_total;
    };
    double lo = 1e-9, hi = 1e9;
    if (eps_at(lo) < target || eps_at(hi) > target)
        throw UnachievableError("target epsilon_total " + format_value(target) +
                                " not reachable by any gradient bound in [1e-9, 1e9]");
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (eps_at(mid) > target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Sweeps and reports.

struct SweepRow {
    std::uint64_t shots = 0;
    double lambda = 0.0;
    double p = 0.0;
    double c_p = 0.0;
    DpBudget budget;
};

/// Evaluate the budget over a (shots x lambda) grid.
inline std::vector<SweepRow> sweep(const std::vector<std::uint64_t>& shot_grid,
                                   const std::vector<double>& lambda_grid, DpParams dp) {
    if (shot_grid.empty() || lambda_grid.empty())
        throw EmptyListError("sweep grids must be nonempty");
    std::vector<SweepRow> rows;
    rows.reserve(shot_grid.size() * lambda_grid.size());
    for (std::uint64_t m : shot_grid) {
        for (double lam : lambda_grid) {
            dp.shots = m;
            dp.lambda = lam;
            SweepRow row;
            row.shots = m;
            row.lambda = lam;
            row.p = cumulative_depolarizing_p(lam, dp.num_layers);
            row.c_p = variance_scaling_c(row.p);
            row.budget = compute_budget(dp);
            rows.push_back(row);
        }
    }
    return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "M,lambda,p,c_p,sigma,delta_nt,epsilon_round,epsilon_total,delta_total";

inline std::string sweep_csv_row(const SweepRow& r) {
    return csv_join({std::to_string(r.shots), format_value(r.lambda), format_value(r.p),
                     format_value(r.c_p), format_value(r.budget.sigma),
                     format_value(r.budget.sensitivity), format_value(r.budget.epsilon_round),
                     format_value(r.budget.epsilon_total),
                     format_value(r.budget.delta_total)});
}

/// JSON report: the full parameter echo plus every budget field.
inline nlohmann::json budget_report(const DpParams& dp, const DpBudget& b) {
    return nlohmann::json{
        {"params",
         {{"num_qubits", dp.num_qubits},
          {"num_layers", dp.num_layers},
          {"shots", dp.shots},
          {"lambda", dp.lambda},
          {"grad_bound", dp.grad_bound},
          {"learning_rate", dp.learning_rate},
          {"local_epochs", dp.local_epochs},
          {"clip", dp.clip},
          {"local_dataset_size", dp.local_dataset_size},
          {"num_clients", dp.num_clients},
          {"num_rounds", dp.num_rounds},
          {"delta_per_round", dp.delta_per_round},
          {"delta_prime", dp.delta_prime},
          {"variance_mode", to_string(dp.variance_mode)}}},
        {"budget",
         {{"per_point_grad_var", b.per_point_grad_var},
          {"per_example_noise_var", b.per_example_noise_var},
          {"total_update_var", b.total_update_var},
          {"sigma", b.sigma},
          {"sensitivity", b.sensitivity},
          {"epsilon_round", b.epsilon_round},
          {"epsilon_total", b.epsilon_total},
          {"delta_total", b.delta_total}}}};
}

} // namespace qfl
