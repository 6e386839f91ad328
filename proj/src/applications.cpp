#include "influence/applications.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "influence/kernels.hpp"
#include "influence/parallel.hpp"
#include "influence/stats.hpp"

namespace influence {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void fill_correlations(ValidationRun& run) {
    run.pearson_r = kNaN;
    run.spearman_r = kNaN;
    if (run.pairs.size() < 2) return;
    Vector predicted;
    Vector actual;
    for (const auto& p : run.pairs) {
        predicted.push_back(p.predicted_loo_delta);
        actual.push_back(p.actual_loo_delta);
    }
    try {
        run.pearson_r = pearson_r(predicted, actual);
        run.spearman_r = spearman_r(predicted, actual);
    } catch (const DataError&) {
        // Constant side: the correlation is undefined and stays NaN.
    }
}

struct Actual {
    double value = kNaN;
    std::string error;
};

// Actual LOO deltas for a set of indices, computed in parallel.
std::map<std::size_t, Actual> actual_deltas(const ModelArtifact& model, const Dataset& data, const Example& test,
                                            const std::vector<std::size_t>& indices,
                                            const LooValidationOptions& options) {
    const ModelSpec& eval = options.eval_spec ? *options.eval_spec : model.spec;
    const double n = static_cast<double>(data.size());
    std::vector<Actual> results(indices.size());
    parallel_for(indices.size(), [&](std::size_t k) {
        const std::size_t idx = indices[k];
        try {
            if (options.mode == LooMode::removal) {
                const LooResult r = retrain_loo(data, model, idx, std::span(&test, 1), options.retrain, &eval);
                results[k].value = r.loss_delta.front();
            } else {
                // Central differences at h and h/2, Richardson-combined to cancel the h^2 term.
                auto central = [&](double h) {
                    const Vector plus = retrain_upweighted(data, model, idx, h, options.retrain);
                    const Vector minus = retrain_upweighted(data, model, idx, -h, options.retrain);
                    return (loss(eval, plus, test.view()) - loss(eval, minus, test.view())) / (2.0 * h);
                };
                const double h = options.fd_step;
                const double slope = (4.0 * central(0.5 * h) - central(h)) / 3.0;
                results[k].value = -slope / n;
            }
        } catch (const std::exception& e) {
            results[k].error = e.what();
        }
    });
    std::map<std::size_t, Actual> out;
    for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] = std::move(results[k]);
    return out;
}

std::vector<std::size_t> top_indices(const std::vector<InfluenceScore>& ranked, std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].train_idx);
    return out;
}

ValidationRun assemble_run(const std::vector<InfluenceScore>& ranked, const std::map<std::size_t, Actual>& actual,
                           std::size_t top_k) {
    ValidationRun run;
    run.top_k = std::min(top_k, ranked.size());
    for (std::size_t i = 0; i < run.top_k; ++i) {
        const auto& s = ranked[i];
        const Actual& a = actual.at(s.train_idx);
        if (!a.error.empty()) {
            run.failures.push_back({s.train_idx, a.error});
            continue;
        }
        run.pairs.push_back({s.train_idx, s.predicted_loo_delta, a.value});
    }
    fill_correlations(run);
    return run;
}

Example owned(ExampleRef z) { return Example{Vector(z.x.begin(), z.x.end()), z.y}; }

}  // namespace

std::string_view loo_mode_name(LooMode mode) {
    return mode == LooMode::removal ? "removal" : "infinitesimal";
}

LooMode parse_loo_mode(std::string_view name) {
    if (name == "removal") return LooMode::removal;
    if (name == "infinitesimal") return LooMode::infinitesimal;
    throw DataError("unknown LOO mode '" + std::string(name) + "'");
}

ValidationRun run_loo_validation(InfluenceEngine& engine, ExampleRef z_test, const LooValidationOptions& options) {
    if (options.top_k == 0) throw DataError("top_k must be positive");
    if (options.mode == LooMode::infinitesimal && !(options.fd_step > 0.0)) {
        throw DataError("fd_step must be positive");
    }
    const InfluenceReport report = engine.up_loss_batch(z_test, "test");
    const auto indices = top_indices(report.scores, options.top_k);
    const auto actual = actual_deltas(engine.artifact(), engine.train(), owned(z_test), indices, options);
    ValidationRun run = assemble_run(report.scores, actual, options.top_k);
    run.diagnostics = report.diagnostics;
    return run;
}

ValidationRun run_loo_validation(const ModelArtifact& model, const Dataset& data, ExampleRef z_test,
                                 const IhvpConfig& ihvp, const LooValidationOptions& options) {
    InfluenceEngine engine(model, data, ihvp);
    return run_loo_validation(engine, z_test, options);
}

// ------------------------------------------------------------------ Newton

namespace {

Eigen::MatrixXd damped_hessian(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                               std::span<const double> weights, double damping) {
    const auto p = static_cast<Eigen::Index>(theta.size());
    if (theta.size() > kExplicitMaxParams) throw DataError("too many parameters for a dense Newton step");
    const Vector dense = EmpiricalHessian(spec, theta, data, weights).dense();
    Eigen::MatrixXd m =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(dense.data(), p, p);
    m.diagonal().array() += damping;
    return m;
}

class DenseSolver {
  public:
    explicit DenseSolver(const Eigen::MatrixXd& m) : llt_(m) {
        if (llt_.info() != Eigen::Success) {
            throw NumericalError("damped Hessian is not positive definite; increase the damping");
        }
    }
    Vector solve(std::span<const double> v) const {
        const Eigen::Map<const Eigen::VectorXd> rhs(v.data(), static_cast<Eigen::Index>(v.size()));
        const Eigen::VectorXd x = llt_.solve(rhs);
        return Vector(x.data(), x.data() + x.size());
    }

  private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

Vector unit_weights(const Dataset& data, std::size_t idx, double eps) {
    Vector w(data.size(), 1.0);
    w[idx] = 1.0 + static_cast<double>(data.size()) * eps;
    return w;
}

}  // namespace

Vector upweighted_newton_step(const ModelSpec& spec, const Dataset& data, std::span<const double> theta,
                              std::size_t idx, double eps, double damping) {
    if (idx >= data.size()) throw DataError("example index out of range");
    const Vector w = unit_weights(data, idx, eps);
    const DenseSolver solver(damped_hessian(spec, theta, data, w, damping));
    Vector step = solver.solve(empirical_grad(spec, theta, data, w));
    simd::scale(-1.0, step);
    return step;
}

NonconvergenceResult nonconvergence_identity_at(const ModelSpec& spec, const Dataset& data,
                                                std::span<const double> theta_tilde, double damping, double eps,
                                                std::span<const std::size_t> sample_points) {
    NonconvergenceResult out;
    out.theta_tilde.assign(theta_tilde.begin(), theta_tilde.end());
    const Vector ones(data.size(), 1.0);
    const Vector g = empirical_grad(spec, theta_tilde, data, ones);
    out.grad_norm = simd::norm2(g);
    const DenseSolver base(damped_hessian(spec, theta_tilde, data, ones, damping));
    const Vector constant = base.solve(g);  // (H + damping I)^-1 g

    out.deviations.resize(sample_points.size());
    parallel_for(sample_points.size(), [&](std::size_t k) {
        const std::size_t idx = sample_points[k];
        const Vector newton = upweighted_newton_step(spec, data, theta_tilde, idx, eps, damping);
        const Vector up_params = base.solve(grad_theta(spec, theta_tilde, data[idx]));
        // A = -(H + damping I)^-1 g - eps (H + damping I)^-1 grad L(z)
        Vector diff = newton;
        for (std::size_t j = 0; j < diff.size(); ++j) diff[j] -= -constant[j] + eps * -up_params[j];
        const double scale = simd::norm2(newton);
        out.deviations[k] = scale > 0.0 ? simd::norm2(diff) / scale : simd::norm2(diff);
    });
    for (double d : out.deviations) out.max_relative_deviation = std::max(out.max_relative_deviation, d);
    return out;
}

NonconvergenceResult check_nonconvergence_identity(const ModelSpec& spec, const Dataset& data,
                                                   const NonconvergenceOptions& options) {
    const ModelArtifact tilde = train_early_stopped(spec, data, options.train, options.stop_at_grad_norm);
    std::vector<std::size_t> points = options.sample_points;
    if (points.empty()) {
        points.resize(std::min<std::size_t>(10, data.size()));
        std::iota(points.begin(), points.end(), 0);
    }
    return nonconvergence_identity_at(spec, data, tilde.theta, options.damping, options.eps, points);
}

// ------------------------------------------------------------ hinge sweep

std::vector<InfluenceScore> zero_filled_hinge_influence(const ModelSpec& hinge_spec, std::span<const double> theta,
                                                        const Dataset& data, ExampleRef z_test, double damping) {
    const double curvature = hinge_spec.l2 + damping;
    if (!(curvature > 0.0)) throw NumericalError("zero-filled hinge Hessian is zero; set l2 or damping");
    auto subgradient = [&](ExampleRef z) {
        Vector g(theta.begin(), theta.end());
        simd::scale(hinge_spec.l2, g);
        if (z.y * simd::dot(theta, z.x) < 1.0) simd::axpy(-z.y, z.x, g);
        return g;
    };
    Vector s = subgradient(z_test);
    simd::scale(1.0 / curvature, s);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    std::vector<InfluenceScore> scores(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double value = -simd::dot(s, subgradient(data[i]));
        scores[i] = {i, value, -value * inv_n};
    }
    rank_scores(scores);
    return scores;
}

HingeSweepResult run_smooth_hinge_sweep(const Dataset& data, ExampleRef z_test, const HingeSweepOptions& options) {
    if (options.temperatures.empty()) throw DataError("temperature sweep is empty");
    if (options.top_k == 0) throw DataError("top_k must be positive");
    ModelSpec train_spec;
    train_spec.family = Family::smooth_hinge;
    train_spec.l2 = options.l2;
    train_spec.temperature = options.train_temperature;
    train_spec.validate();
    train_spec.check_compatible(data);

    HingeSweepResult out;
    out.model = train(train_spec, data, options.train);

    ModelSpec eval_spec = train_spec;
    eval_spec.family = Family::hinge;

    IhvpConfig ihvp;
    ihvp.damping = options.damping;
    std::vector<InfluenceReport> reports;
    std::set<std::size_t> needed;
    for (double t : options.temperatures) {
        ModelArtifact scored = out.model;
        scored.spec.temperature = t;
        scored.spec.validate();
        InfluenceEngine engine(scored, data, ihvp);
        reports.push_back(engine.up_loss_batch(z_test, "test"));
        for (auto idx : top_indices(reports.back().scores, options.top_k)) needed.insert(idx);
    }
    std::vector<InfluenceScore> zero_scores;
    if (options.zero_filled) {
        zero_scores = zero_filled_hinge_influence(eval_spec, out.model.theta, data, z_test, options.damping);
        for (auto idx : top_indices(zero_scores, options.top_k)) needed.insert(idx);
    }

    LooValidationOptions loo;
    loo.retrain = options.train;
    loo.eval_spec = eval_spec;
    const auto actual =
        actual_deltas(out.model, data, owned(z_test), std::vector<std::size_t>(needed.begin(), needed.end()), loo);

    for (std::size_t k = 0; k < options.temperatures.size(); ++k) {
        HingeSweepRow row;
        row.temperature = options.temperatures[k];
        row.run = assemble_run(reports[k].scores, actual, options.top_k);
        row.run.diagnostics = reports[k].diagnostics;
        out.rows.push_back(std::move(row));
    }
    if (options.zero_filled) out.zero_filled = assemble_run(zero_scores, actual, options.top_k);
    return out;
}

// ----------------------------------------------------------------- triage

std::string_view triage_strategy_name(TriageStrategy strategy) {
    switch (strategy) {
        case TriageStrategy::influence: return "influence";
        case TriageStrategy::loss: return "loss";
        case TriageStrategy::random: return "random";
    }
    return "unknown";
}

TriageStrategy parse_triage_strategy(std::string_view name) {
    if (name == "influence") return TriageStrategy::influence;
    if (name == "loss") return TriageStrategy::loss;
    if (name == "random") return TriageStrategy::random;
    throw DataError("unknown triage strategy '" + std::string(name) + "'");
}

namespace {

double accuracy(const ModelSpec& spec, std::span<const double> theta, const Dataset& data) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (predict(spec, theta, data.row(i)) == data[i].y) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<std::size_t> order_by_desc(const Vector& key) {
    std::vector<std::size_t> order(key.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return order;
}

// Separate stream for the random inspection order so it is independent of
// which labels were flipped.
constexpr std::uint64_t kInspectSalt = 0xd1b54a32d192ed03ULL;

}  // namespace

TriageRun run_mislabel_triage(const ModelSpec& spec, const Dataset& clean_data, const TriageOptions& options,
                              const Dataset* test_data) {
    if (!(options.flip_fraction > 0.0 && options.flip_fraction < 1.0)) {
        throw DataError("flip fraction must be in (0, 1)");
    }
    if (clean_data.task() != Task::binary) throw DataError("label triage needs a binary dataset");
    spec.check_compatible(clean_data);
    for (double f : options.inspection_grid) {
        if (!(f >= 0.0 && f <= 1.0)) throw DataError("inspection fractions must be in [0, 1]");
    }
    const Dataset& eval_data = test_data ? *test_data : clean_data;
    const std::size_t n = clean_data.size();

    TriageRun run;
    run.flip_fraction = options.flip_fraction;
    run.strategy = options.strategy;
    run.seed = options.seed;

    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_flip = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(options.flip_fraction * static_cast<double>(n))));
    run.flipped.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_flip));
    std::sort(run.flipped.begin(), run.flipped.end());

    Dataset corrupted = clean_data;
    std::vector<char> is_flipped(n, 0);
    for (auto i : run.flipped) {
        corrupted.set_label(i, -clean_data[i].y);
        is_flipped[i] = 1;
    }
    const ModelArtifact model = train(spec, corrupted, options.train);

    std::vector<std::size_t> order;
    switch (options.strategy) {
        case TriageStrategy::influence: {
            InfluenceEngine engine(model, corrupted, options.ihvp);
            for (const auto& s : engine.self_influence().scores) order.push_back(s.train_idx);
            break;
        }
        case TriageStrategy::loss: {
            Vector losses(n);
            for (std::size_t i = 0; i < n; ++i) losses[i] = loss(spec, model.theta, corrupted[i]);
            order = order_by_desc(losses);
            break;
        }
        case TriageStrategy::random: {
            order.resize(n);
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 inspect(options.seed ^ kInspectSalt);
            std::shuffle(order.begin(), order.end(), inspect);
            break;
        }
    }

    run.curve.resize(options.inspection_grid.size());
    parallel_for(options.inspection_grid.size(), [&](std::size_t k) {
        const double f = options.inspection_grid[k];
        const auto m = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
        Dataset fixed = corrupted;
        std::size_t found = 0;
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t i = order[r];
            if (is_flipped[i]) {
                fixed.set_label(i, clean_data[i].y);
                ++found;
            }
        }
        Vector theta = model.theta;
        if (found > 0) {
            TrainConfig warm = options.train;
            warm.warm_start = model.theta;
            theta = train(spec, fixed, warm).theta;
        }
        run.curve[k] = {f, static_cast<double>(found) / static_cast<double>(n_flip),
                        accuracy(spec, theta, eval_data)};
    });
    return run;
}

// ----------------------------------------------------------------- attack

long quantize(double value, int levels) { return std::lround(value * static_cast<double>(levels - 1)); }

double project_feature(double value, double origin, int levels) {
    const double steps = static_cast<double>(levels - 1);
    const double q = 1.0 / steps;
    const long code = quantize(origin, levels);
    double lo = std::max({origin - 0.5 * q, 0.0, (static_cast<double>(code) - 0.5) / steps});
    double hi = std::min({origin + 0.5 * q, 1.0, (static_cast<double>(code) + 0.5) / steps});
    // The cell edges round away from the code on one side; step inward.
    while (quantize(lo, levels) != code) lo = std::nextafter(lo, origin);
    while (quantize(hi, levels) != code) hi = std::nextafter(hi, origin);
    return std::clamp(value, lo, hi);
}

namespace {

Vector average_s_test(const ModelArtifact& model, const Dataset& data, const Dataset& targets, double damping) {
    IhvpConfig config;
    config.damping = damping;
    if (model.theta.size() > kExplicitMaxParams) config.method = IhvpMethod::cg;
    InfluenceEngine engine(model, data, config);
    Vector s(model.theta.size(), 0.0);
    for (std::size_t t = 0; t < targets.size(); ++t) simd::axpy(1.0, engine.s_test(targets[t]), s);
    simd::scale(1.0 / static_cast<double>(targets.size()), s);
    return s;
}

Vector pert_direction(const ModelSpec& spec, std::span<const double> theta, ExampleRef z, std::span<const double> s) {
    Vector out = grad_x_grad_theta_left(spec, theta, z, s);
    simd::scale(-1.0, out);
    for (double v : out) {
        if (!std::isfinite(v)) throw NumericalError("perturbation influence is not finite");
    }
    return out;
}

double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

AttackState run_training_attack(const ModelSpec& spec, const Dataset& data, const Dataset& targets,
                                const AttackOptions& options) {
    spec.validate();
    spec.check_compatible(data);
    if (!spec.differentiable()) throw UnsupportedOperation("the attack needs a differentiable loss family");
    if (targets.size() == 0) throw DataError("attack needs at least one target");
    if (targets.dim() != data.dim()) throw DataError("targets and training data differ in dimension");
    if (!(options.alpha >= 0.0) || !std::isfinite(options.alpha)) throw DataError("alpha must be non-negative");
    if (options.levels < 2) throw DataError("levels must be at least 2");
    if (options.max_iters < 0) throw DataError("iteration count must be non-negative");
    if (options.budget == 0 || options.budget > data.size()) throw DataError("budget must be in [1, n]");

    AttackState state;
    state.original = data;
    state.poisoned = data;
    state.alpha = options.alpha;
    state.levels = options.levels;
    state.model = train(spec, data);

    Vector clean_pred(targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) clean_pred[t] = predict(spec, state.model.theta, targets.row(t));

    // Pick the rows whose features move the target loss most per unit step.
    {
        const Vector s = average_s_test(state.model, data, targets, options.damping);
        Vector strength(data.size());
        parallel_for(data.size(), [&](std::size_t i) {
            strength[i] = sup_norm(pert_direction(spec, state.model.theta, data[i], s));
        });
        const auto order = order_by_desc(strength);
        state.perturbed_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.budget));
    }
    for (auto i : state.perturbed_indices) {
        for (double v : data.row(i)) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw DataError("attacked row " + std::to_string(i) + " has features outside [0, 1]");
            }
        }
    }

    const std::size_t d = data.dim();
    for (int it = 1; it <= options.max_iters; ++it) {
        const Vector s = average_s_test(state.model, state.poisoned, targets, options.damping);
        for (auto i : state.perturbed_indices) {
            const Vector dir = pert_direction(spec, state.model.theta, state.poisoned[i], s);
            const auto origin = data.row(i);
            Vector row(state.poisoned.row(i).begin(), state.poisoned.row(i).end());
            for (std::size_t j = 0; j < d; ++j) {
                row[j] = project_feature(row[j] + options.alpha * sign(dir[j]), origin[j], options.levels);
            }
            state.poisoned.set_row(i, row);
        }

        TrainConfig warm = options.retrain;
        warm.warm_start = state.model.theta;
        try {
            state.model = train(spec, state.poisoned, warm);
        } catch (const TrainError& e) {
            // Capped retraining: keep the last iterate, as the attack loop allows.
            state.model.theta = e.last_theta;
            state.model.train_meta = {empirical_risk(spec, e.last_theta, state.poisoned), e.grad_norm, e.iterations};
        }

        AttackIteration log;
        log.iteration = it;
        for (std::size_t t = 0; t < targets.size(); ++t) {
            log.mean_target_loss += loss(spec, state.model.theta, targets[t]);
            if (predict(spec, state.model.theta, targets.row(t)) != clean_pred[t]) log.flipped.push_back(t);
        }
        log.mean_target_loss /= static_cast<double>(targets.size());
        for (auto i : state.perturbed_indices) {
            const auto now = state.poisoned.row(i);
            const auto origin = data.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                log.sup_displacement = std::max(log.sup_displacement, std::abs(now[j] - origin[j]));
                if (quantize(now[j], options.levels) != quantize(origin[j], options.levels)) {
                    log.quantization_preserved = false;
                }
            }
        }
        state.iteration = it;
        state.flips = log.flipped;
        const bool done = log.flipped.size() == targets.size();
        state.log.push_back(std::move(log));
        if (done) break;
    }
    return state;
}

}  // namespace influence
