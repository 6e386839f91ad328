#pragma once

// Experiment harnesses built on the influence engine and the retraining
// oracle: LOO validation, the non-convergence identity, the smooth-hinge
// temperature sweep, mislabel triage and the training-set attack.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "influence/influence.hpp"
#include "influence/trainer.hpp"

namespace influence {

// ---------------------------------------------------------------- validation

struct ValidationPair {
    std::size_t train_idx = 0;
    double predicted_loo_delta = 0.0;
    double actual_loo_delta = 0.0;
};

struct RetrainFailure {
    std::size_t train_idx = 0;
    std::string message;
};

struct ValidationRun {
    std::vector<ValidationPair> pairs;
    double pearson_r = 0.0;
    double spearman_r = 0.0;
    std::size_t top_k = 0;
    IhvpDiagnostics diagnostics;
    /// Points whose retraining failed; excluded from the correlations.
    std::vector<RetrainFailure> failures;
};

/// How the "actual" side is measured.
///   removal        L(z_test, theta_{-z}) - L(z_test, theta), the default.
///   infinitesimal  -(1/n) d/d eps L(z_test, theta_{eps,z}) at eps = 0, from
///                  central differences of exact retrainings at +-step and
///                  +-step/2 with Richardson extrapolation.
///                  This is the quantity influence predicts with no
///                  linearization gap, so it isolates solver error.
enum class LooMode { removal, infinitesimal };

std::string_view loo_mode_name(LooMode mode);
LooMode parse_loo_mode(std::string_view name);

struct LooValidationOptions {
    std::size_t top_k = 100;
    LooMode mode = LooMode::removal;
    double fd_step = 1e-4;
    TrainConfig retrain;
    /// Loss used for the actual deltas; the model's own spec when unset.
    std::optional<ModelSpec> eval_spec;
};

/// Ranks every training point by |i_up_loss| against z_test, retrains
/// without each of the top_k, and correlates predicted with actual deltas.
/// Retrainings run in parallel.
ValidationRun run_loo_validation(const ModelArtifact& model, const Dataset& data, ExampleRef z_test,
                                 const IhvpConfig& ihvp, const LooValidationOptions& options = {});

/// Same, reusing an engine that already holds s_test for the model.
ValidationRun run_loo_validation(InfluenceEngine& engine, ExampleRef z_test,
                                 const LooValidationOptions& options = {});

// ----------------------------------------------------- non-convergence check

struct NonconvergenceOptions {
    double stop_at_grad_norm = 1e-2;
    double damping = 0.01;
    double eps = 0.0;
    std::vector<std::size_t> sample_points;
    TrainConfig train;
};

struct NonconvergenceResult {
    Vector theta_tilde;
    double grad_norm = 0.0;
    /// max over sampled z of |N_{eps,z} - A_{eps,z}| / |N_{eps,z}| where
    /// A = -(H + damping I)^-1 g + eps * I_up,params(z).
    double max_relative_deviation = 0.0;
    std::vector<double> deviations;
};

/// Trains an early-stopped model and evaluates the Newton-step identity at it.
NonconvergenceResult check_nonconvergence_identity(const ModelSpec& spec, const Dataset& data,
                                                   const NonconvergenceOptions& options);

/// Same identity at a given non-converged point.
NonconvergenceResult nonconvergence_identity_at(const ModelSpec& spec, const Dataset& data,
                                                std::span<const double> theta_tilde, double damping,
                                                double eps, std::span<const std::size_t> sample_points);

/// Newton step from theta of the eps-upweighted, damped objective:
/// -(H + eps H_z + damping I)^-1 (g + eps grad L(z)).
Vector upweighted_newton_step(const ModelSpec& spec, const Dataset& data, std::span<const double> theta,
                              std::size_t idx, double eps, double damping);

// ------------------------------------------------------- smooth-hinge sweep

struct HingeSweepOptions {
    std::vector<double> temperatures{0.001, 0.01, 0.1, 1.0};
    double l2 = 0.01;
    /// Temperature of the single trained model.
    double train_temperature = 0.001;
    std::size_t top_k = 100;
    double damping = 0.0;
    /// Also score with zero-filled hinge derivatives.
    bool zero_filled = true;
    TrainConfig train;
};

struct HingeSweepRow {
    double temperature = 0.0;
    ValidationRun run;
};

struct HingeSweepResult {
    ModelArtifact model;
    std::vector<HingeSweepRow> rows;
    std::optional<ValidationRun> zero_filled;
};

/// Trains once with smooth hinge at train_temperature, then for each sweep
/// temperature predicts LOO deltas with that temperature's influence and
/// compares them with true hinge-loss deltas after retraining.
HingeSweepResult run_smooth_hinge_sweep(const Dataset& data, ExampleRef z_test,
                                        const HingeSweepOptions& options = {});

/// i_up_loss with hinge derivatives set to their zero-filled subgradient
/// (-y x when the margin is below 1, else 0) and H = l2 I + damping I.
std::vector<InfluenceScore> zero_filled_hinge_influence(const ModelSpec& hinge_spec,
                                                        std::span<const double> theta,
                                                        const Dataset& data, ExampleRef z_test,
                                                        double damping);

// ----------------------------------------------------------- label triage

enum class TriageStrategy { influence, loss, random };

std::string_view triage_strategy_name(TriageStrategy strategy);
TriageStrategy parse_triage_strategy(std::string_view name);

struct TriagePoint {
    double fraction_checked = 0.0;
    double fraction_flips_found = 0.0;
    double test_accuracy = 0.0;
};

struct TriageOptions {
    double flip_fraction = 0.1;
    TriageStrategy strategy = TriageStrategy::influence;
    std::uint64_t seed = 0;
    std::vector<double> inspection_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
    IhvpConfig ihvp;
    TrainConfig train;
};

struct TriageRun {
    double flip_fraction = 0.0;
    TriageStrategy strategy = TriageStrategy::influence;
    std::uint64_t seed = 0;
    std::vector<std::size_t> flipped;
    std::vector<TriagePoint> curve;
};

/// Flips a uniform random flip_fraction of the labels, trains on the
/// corrupted data, ranks points by the strategy and, for every grid
/// fraction, fixes the flipped labels among the inspected prefix, retrains
/// and records the fraction of flips found and the accuracy on test_data
/// (the clean training data when test_data is null).
TriageRun run_mislabel_triage(const ModelSpec& spec, const Dataset& clean_data, const TriageOptions& options,
                              const Dataset* test_data = nullptr);

// -------------------------------------------------------- training attack

/// 8-bit style code of a feature in [0, 1]: round(v * (levels - 1)).
long quantize(double value, int levels);

/// Projects v into [origin - q/2, origin + q/2] intersected with [0, 1] and
/// with the set of values sharing origin's code, q = 1 / (levels - 1).
double project_feature(double value, double origin, int levels);

struct AttackOptions {
    double alpha = 0.02;
    int levels = 256;
    int max_iters = 100;
    std::size_t budget = 1;
    double damping = 0.01;
    /// Retraining after each step: warm start, capped iterations.
    TrainConfig retrain{1e-8, 100, Optimizer::newton_cg, std::nullopt};
};

struct AttackIteration {
    int iteration = 0;
    double mean_target_loss = 0.0;
    /// max |poisoned - original| over the perturbed rows.
    double sup_displacement = 0.0;
    /// Targets whose prediction differs from the clean model's.
    std::vector<std::size_t> flipped;
    bool quantization_preserved = true;
};

struct AttackState {
    Dataset original;
    Dataset poisoned;
    std::vector<std::size_t> perturbed_indices;
    double alpha = 0.0;
    int levels = 0;
    int iteration = 0;
    /// Target indices flipped at the end of the run.
    std::vector<std::size_t> flips;
    std::vector<AttackIteration> log;
    ModelArtifact model;
};

/// Influence-guided sign-step attack. Targets are scored by their average
/// loss; the budget rows with the largest |I_pert,loss|_inf are perturbed.
AttackState run_training_attack(const ModelSpec& spec, const Dataset& data, const Dataset& targets,
                                const AttackOptions& options = {});

}  // namespace influence
