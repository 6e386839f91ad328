#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "influence/error.hpp"
#include "influence/model_io.hpp"

namespace influence {

enum class Optimizer { newton_cg, lbfgs };

std::string_view optimizer_name(Optimizer method);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
    /// Stop once |grad R(theta)| <= tol_grad.
    double tol_grad = 1e-8;
    /// Outer iterations (Newton steps or L-BFGS steps).
    int max_iters = 100;
    Optimizer method = Optimizer::newton_cg;
    /// Starting point; zero vector when unset.
    std::optional<Vector> warm_start;
};

/// Raised when the iteration cap is hit first. Carries the last iterate.
class TrainError : public NumericalError {
  public:
    TrainError(const std::string& what, Vector last_theta, double grad_norm, int iterations)
        : NumericalError(what), last_theta(std::move(last_theta)), grad_norm(grad_norm),
          iterations(iterations) {}

    Vector last_theta;
    double grad_norm;
    int iterations;
};

/// Minimizes (1/n) sum_i w_i L(z_i, theta). Deterministic: fixed summation
/// order, Armijo backtracking (factor 0.5, c = 1e-4), no randomness.
ModelArtifact train(const ModelSpec& spec, const Dataset& data, const TrainConfig& config = {},
                    std::span<const double> weights = {});

/// Deliberately non-converged parameters: gradient descent with backtracking
/// from the start point, returning the first iterate whose gradient norm is
/// at most stop_at_grad_norm. Iteration cap is 1000 * config.max_iters.
ModelArtifact train_early_stopped(const ModelSpec& spec, const Dataset& data,
                                  const TrainConfig& config, double stop_at_grad_norm);

struct LooResult {
    std::size_t removed_idx = 0;
    Vector theta_minus;
    /// L(z_test, theta_minus) - L(z_test, theta_base) per test point.
    Vector loss_delta;
};

/// Leave-one-out retraining. The retrained objective keeps the 1/n
/// normalization and drops the removed term (weight 0), warm-started at
/// base.theta. Deltas use eval_spec when given (e.g. true hinge loss),
/// otherwise base.spec.
LooResult retrain_loo(const Dataset& data, const ModelArtifact& base, std::size_t removed_idx,
                      std::span<const Example> test_points, const TrainConfig& config = {},
                      const ModelSpec* eval_spec = nullptr);

/// Retrains with example idx reweighted to 1 + n * eps (eps = -1/n removes it).
Vector retrain_upweighted(const Dataset& data, const ModelArtifact& base, std::size_t idx,
                          double eps, const TrainConfig& config = {});

}  // namespace influence
