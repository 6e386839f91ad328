#include "influence/trainer.hpp"

#include <cmath>
#include <deque>

#include "influence/kernels.hpp"

namespace influence {

std::string_view optimizer_name(Optimizer method) {
    return method == Optimizer::newton_cg ? "newton_cg" : "lbfgs";
}

Optimizer parse_optimizer(std::string_view name) {
    if (name == "newton_cg") return Optimizer::newton_cg;
    if (name == "lbfgs") return Optimizer::lbfgs;
    throw DataError("unknown optimizer '" + std::string(name) + "'");
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr int kMaxHalvings = 60;

struct Objective {
    const ModelSpec& spec;
    const Dataset& data;
    std::span<const double> weights;

    double value(std::span<const double> theta) const {
        return empirical_risk(spec, theta, data, weights);
    }
    Vector grad(std::span<const double> theta) const {
        return empirical_grad(spec, theta, data, weights);
    }
};

Vector add_scaled(std::span<const double> x, double t, std::span<const double> dir) {
    Vector out(x.begin(), x.end());
    simd::axpy(t, dir, out);
    return out;
}

struct StepResult {
    Vector theta;
    double value;
    Vector grad;
    double t;
};

// Armijo backtracking along dir. Near the optimum the predicted decrease can
// fall below the rounding level of the objective; there a step is accepted
// when it reduces the gradient norm instead.
std::optional<StepResult> line_search(const Objective& obj, std::span<const double> theta, double f,
                                      std::span<const double> grad, std::span<const double> dir,
                                      double t0) {
    const double slope = simd::dot(grad, dir);
    const double gnorm = simd::norm2(grad);
    const double noise = 1e-13 * (1.0 + std::abs(f));
    double t = t0;
    for (int k = 0; k <= kMaxHalvings; ++k, t *= kBacktrack) {
        Vector trial = add_scaled(theta, t, dir);
        const double ft = obj.value(trial);
        if (!std::isfinite(ft)) continue;
        if (ft <= f + kArmijo * t * slope) {
            Vector g = obj.grad(trial);
            return StepResult{std::move(trial), ft, std::move(g), t};
        }
        if (std::abs(t * slope) <= noise) {
            Vector g = obj.grad(trial);
            if (simd::norm2(g) < gnorm) return StepResult{std::move(trial), ft, std::move(g), t};
        }
    }
    return std::nullopt;
}

// Truncated CG on H d = -g with forcing tolerance eta * |g|.
Vector newton_direction(const EmpiricalHessian& hess, std::span<const double> grad, double eta) {
    const std::size_t p = grad.size();
    Vector x(p, 0.0);
    Vector r(grad.begin(), grad.end());
    simd::scale(-1.0, r);
    Vector d = r;
    Vector hd(p);
    double rr = simd::dot(r, r);
    const double target = eta * eta * rr;
    const int max_inner = static_cast<int>(std::max<std::size_t>(2 * p, 20));
    for (int it = 0; it < max_inner && rr > target; ++it) {
        hess.apply(d, hd);
        const double curv = simd::dot(d, hd);
        if (curv <= 1e-300 * std::max(1.0, simd::dot(d, d))) {
            if (it == 0) return r;  // steepest descent
            break;
        }
        const double alpha = rr / curv;
        simd::axpy(alpha, d, x);
        simd::axpy(-alpha, hd, r);
        const double rr_new = simd::dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < p; ++i) d[i] = r[i] + beta * d[i];
    }
    return x;
}

ModelArtifact finish(const ModelSpec& spec, const Dataset& data, Vector theta, double f, double gnorm,
                     int iters) {
    ModelArtifact out;
    out.spec = spec;
    out.n_features = data.dim();
    out.theta = std::move(theta);
    out.train_meta = {f, gnorm, iters};
    return out;
}

Vector start_point(const ModelSpec& spec, const Dataset& data, const TrainConfig& config) {
    const std::size_t p = spec.n_params(data.dim());
    if (!config.warm_start) return Vector(p, 0.0);
    if (config.warm_start->size() != p) throw DataError("warm start has wrong length");
    return *config.warm_start;
}

ModelArtifact train_newton(const Objective& obj, const TrainConfig& config) {
    Vector theta = start_point(obj.spec, obj.data, config);
    double f = obj.value(theta);
    Vector g = obj.grad(theta);
    double gnorm = simd::norm2(g);
    int iter = 0;
    while (gnorm > config.tol_grad) {
        if (iter >= config.max_iters) {
            throw TrainError("training did not reach tolerance within " + std::to_string(config.max_iters) +
                                 " iterations (|grad| = " + std::to_string(gnorm) + ")",
                             theta, gnorm, iter);
        }
        const EmpiricalHessian hess(obj.spec, theta, obj.data, obj.weights);
        const double eta = std::min(0.5, gnorm);
        Vector dir = newton_direction(hess, g, eta);
        if (simd::dot(dir, g) >= 0.0) {
            dir = g;
            simd::scale(-1.0, dir);
        }
        auto step = line_search(obj, theta, f, g, dir, 1.0);
        if (!step) {
            throw TrainError("line search failed (|grad| = " + std::to_string(gnorm) + ")", theta, gnorm, iter);
        }
        theta = std::move(step->theta);
        f = step->value;
        g = std::move(step->grad);
        gnorm = simd::norm2(g);
        ++iter;
    }
    return finish(obj.spec, obj.data, std::move(theta), f, gnorm, iter);
}

ModelArtifact train_lbfgs(const Objective& obj, const TrainConfig& config) {
    constexpr std::size_t kMemory = 10;
    Vector theta = start_point(obj.spec, obj.data, config);
    double f = obj.value(theta);
    Vector g = obj.grad(theta);
    double gnorm = simd::norm2(g);
    std::deque<std::pair<Vector, Vector>> history;  // (s, y)
    int iter = 0;
    while (gnorm > config.tol_grad) {
        if (iter >= config.max_iters) {
            throw TrainError("L-BFGS did not reach tolerance within " + std::to_string(config.max_iters) +
                                 " iterations (|grad| = " + std::to_string(gnorm) + ")",
                             theta, gnorm, iter);
        }
        // Two-loop recursion.
        Vector q = g;
        std::vector<double> alphas(history.size());
        for (std::size_t k = history.size(); k-- > 0;) {
            const auto& [s, y] = history[k];
            alphas[k] = simd::dot(s, q) / simd::dot(y, s);
            simd::axpy(-alphas[k], y, q);
        }
        if (!history.empty()) {
            const auto& [s, y] = history.back();
            simd::scale(simd::dot(s, y) / simd::dot(y, y), q);
        } else {
            simd::scale(1.0 / std::max(1.0, gnorm), q);
        }
        for (std::size_t k = 0; k < history.size(); ++k) {
            const auto& [s, y] = history[k];
            const double beta = simd::dot(y, q) / simd::dot(y, s);
            simd::axpy(alphas[k] - beta, s, q);
        }
        simd::scale(-1.0, q);
        if (simd::dot(q, g) >= 0.0) {
            history.clear();
            q = g;
            simd::scale(-1.0 / std::max(1.0, gnorm), q);
        }
        auto step = line_search(obj, theta, f, g, q, 1.0);
        if (!step) {
            throw TrainError("line search failed (|grad| = " + std::to_string(gnorm) + ")", theta, gnorm, iter);
        }
        Vector s(theta.size());
        Vector y(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) {
            s[i] = step->theta[i] - theta[i];
            y[i] = step->grad[i] - g[i];
        }
        if (simd::dot(s, y) > 1e-12 * simd::norm2(s) * simd::norm2(y)) {
            history.emplace_back(std::move(s), std::move(y));
            if (history.size() > kMemory) history.pop_front();
        }
        theta = std::move(step->theta);
        f = step->value;
        g = std::move(step->grad);
        gnorm = simd::norm2(g);
        ++iter;
    }
    return finish(obj.spec, obj.data, std::move(theta), f, gnorm, iter);
}

void check_train_inputs(const ModelSpec& spec, const Dataset& data, const TrainConfig& config) {
    spec.check_compatible(data);
    if (!spec.differentiable()) {
        throw UnsupportedOperation("cannot train hinge directly; train smooth_hinge instead");
    }
    if (!(config.tol_grad > 0.0)) throw DataError("tol_grad must be positive");
    if (config.max_iters <= 0) throw DataError("max_iters must be positive");
}

}  // namespace

ModelArtifact train(const ModelSpec& spec, const Dataset& data, const TrainConfig& config,
                    std::span<const double> weights) {
    check_train_inputs(spec, data, config);
    const Objective obj{spec, data, weights};
    return config.method == Optimizer::newton_cg ? train_newton(obj, config) : train_lbfgs(obj, config);
}

ModelArtifact train_early_stopped(const ModelSpec& spec, const Dataset& data, const TrainConfig& config,
                                  double stop_at_grad_norm) {
    check_train_inputs(spec, data, config);
    if (!(stop_at_grad_norm > config.tol_grad)) {
        throw DataError("stop_at_grad_norm must exceed tol_grad");
    }
    const Objective obj{spec, data, {}};
    Vector theta = start_point(spec, data, config);
    double f = obj.value(theta);
    Vector g = obj.grad(theta);
    double gnorm = simd::norm2(g);
    const long cap = 1000L * config.max_iters;
    double t = 1.0;
    long iter = 0;
    while (gnorm > stop_at_grad_norm) {
        if (iter >= cap) {
            throw TrainError("early-stopped descent hit its iteration cap", theta, gnorm, static_cast<int>(iter));
        }
        Vector dir = g;
        simd::scale(-1.0, dir);
        auto step = line_search(obj, theta, f, g, dir, t);
        if (!step) throw TrainError("line search failed in descent", theta, gnorm, static_cast<int>(iter));
        t = step->t;
        theta = std::move(step->theta);
        f = step->value;
        g = std::move(step->grad);
        gnorm = simd::norm2(g);
        ++iter;
    }
    return finish(spec, data, std::move(theta), f, gnorm, static_cast<int>(iter));
}

namespace {

Vector retrain_with_weight(const Dataset& data, const ModelArtifact& base, std::size_t idx, double weight,
                           const TrainConfig& config) {
    if (idx >= data.size()) throw DataError("example index out of range");
    Vector weights(data.size(), 1.0);
    weights[idx] = weight;
    TrainConfig warm = config;
    warm.warm_start = base.theta;
    return train(base.spec, data, warm, weights).theta;
}

}  // namespace

Vector retrain_upweighted(const Dataset& data, const ModelArtifact& base, std::size_t idx, double eps,
                          const TrainConfig& config) {
    return retrain_with_weight(data, base, idx, 1.0 + static_cast<double>(data.size()) * eps, config);
}

LooResult retrain_loo(const Dataset& data, const ModelArtifact& base, std::size_t removed_idx,
                      std::span<const Example> test_points, const TrainConfig& config,
                      const ModelSpec* eval_spec) {
    LooResult out;
    out.removed_idx = removed_idx;
    out.theta_minus = retrain_with_weight(data, base, removed_idx, 0.0, config);
    const ModelSpec& eval = eval_spec ? *eval_spec : base.spec;
    out.loss_delta.reserve(test_points.size());
    for (const auto& z : test_points) {
        out.loss_delta.push_back(loss(eval, out.theta_minus, z.view()) - loss(eval, base.theta, z.view()));
    }
    return out;
}

}  // namespace influence
