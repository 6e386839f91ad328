#include "influence/influence.hpp"

#include <algorithm>
#include <cmath>

#include "influence/kernels.hpp"
#include "influence/parallel.hpp"

namespace influence {

const InfluenceScore& InfluenceReport::score_for(std::size_t train_idx) const {
    for (const auto& s : scores) {
        if (s.train_idx == train_idx) return s;
    }
    throw DataError("no score for training index " + std::to_string(train_idx));
}

void rank_scores(std::vector<InfluenceScore>& scores) {
    std::sort(scores.begin(), scores.end(), [](const InfluenceScore& a, const InfluenceScore& b) {
        const double ma = std::abs(a.i_up_loss);
        const double mb = std::abs(b.i_up_loss);
        if (ma != mb) return ma > mb;
        return a.train_idx < b.train_idx;
    });
}

InfluenceEngine::InfluenceEngine(ModelArtifact artifact, const Dataset& train, IhvpConfig config)
    : artifact_(std::move(artifact)), train_(&train),
      solver_((artifact_.spec.check_compatible(train), artifact_.spec), artifact_.theta, train, config),
      fingerprint_(influence::fingerprint(artifact_.theta)) {
    if (artifact_.n_features != train.dim()) {
        throw DataError("model has " + std::to_string(artifact_.n_features) + " features, data has " +
                        std::to_string(train.dim()));
    }
}

const InfluenceEngine::CacheEntry& InfluenceEngine::cached(ExampleRef z_test) {
    if (z_test.x.size() != train_->dim()) throw DataError("test point has wrong dimension");
    const auto& cfg = solver_.config();
    const std::string key = influence::fingerprint(z_test.x) + "|" + format_double(z_test.y) + "|" +
                            std::string(ihvp_method_name(cfg.method)) + "|" + format_double(cfg.damping);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const Vector g = grad_theta(artifact_.spec, artifact_.theta, z_test);
    IhvpResult res = solver_.solve(g);
    return cache_.emplace(key, CacheEntry{std::move(res.s), res.diagnostics}).first->second;
}

const Vector& InfluenceEngine::s_test(ExampleRef z_test) { return cached(z_test).s; }

const IhvpDiagnostics& InfluenceEngine::s_test_diagnostics(ExampleRef z_test) {
    return cached(z_test).diagnostics;
}

Vector InfluenceEngine::up_params(ExampleRef z) const {
    const Vector g = grad_theta(artifact_.spec, artifact_.theta, z);
    Vector out = solver_.solve(g).s;
    simd::scale(-1.0, out);
    return out;
}

double InfluenceEngine::up_loss(ExampleRef z, ExampleRef z_test) {
    const Vector& s = s_test(z_test);
    return -simd::dot(s, grad_theta(artifact_.spec, artifact_.theta, z));
}

InfluenceReport InfluenceEngine::up_loss_batch(ExampleRef z_test, std::string target) {
    const auto& entry = cached(z_test);
    const Dataset& data = *train_;
    const std::size_t n = data.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    InfluenceReport report;
    report.target = std::move(target);
    report.diagnostics = entry.diagnostics;
    report.model_fingerprint = fingerprint_;
    report.scores.resize(n);

    const bool zero = std::all_of(entry.s.begin(), entry.s.end(), [](double v) { return v == 0.0; });
    if (zero) report.note = "test-point gradient is zero; every score is zero";

    parallel_for(n, [&](std::size_t i) {
        double value = 0.0;
        if (!zero) value = -simd::dot(entry.s, grad_theta(artifact_.spec, artifact_.theta, data[i]));
        report.scores[i] = {i, value, -value * inv_n};
    });
    rank_scores(report.scores);
    return report;
}

InfluenceReport InfluenceEngine::self_influence() {
    const Dataset& data = *train_;
    const std::size_t n = data.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    InfluenceReport report;
    report.target = "self";
    report.model_fingerprint = fingerprint_;
    report.scores.resize(n);
    std::vector<IhvpDiagnostics> diags(n);

    parallel_for(n, [&](std::size_t i) {
        const Vector g = grad_theta(artifact_.spec, artifact_.theta, data[i]);
        double value = 0.0;
        if (std::any_of(g.begin(), g.end(), [](double v) { return v != 0.0; })) {
            const IhvpResult res = solver_.solve(g);
            value = -simd::dot(g, res.s);
            diags[i] = res.diagnostics;
        }
        report.scores[i] = {i, value, -value * inv_n};
    });
    // Report the worst residual seen across the n solves.
    report.diagnostics = diags.front();
    for (const auto& d : diags) {
        if (d.residual > report.diagnostics.residual) report.diagnostics.residual = d.residual;
        report.diagnostics.iterations = std::max(report.diagnostics.iterations, d.iterations);
    }
    rank_scores(report.scores);
    return report;
}

Vector InfluenceEngine::pert_loss(ExampleRef z, ExampleRef z_test) {
    const Vector& s = s_test(z_test);
    Vector out = grad_x_grad_theta_left(artifact_.spec, artifact_.theta, z, s);
    simd::scale(-1.0, out);
    return out;
}

std::vector<VariantRow> InfluenceEngine::variants(ExampleRef z_test) {
    const ModelSpec& spec = artifact_.spec;
    if (spec.family != Family::binary_logistic) {
        throw DataError("influence variants are defined for binary_logistic only");
    }
    const Dataset& data = *train_;
    const auto& theta = artifact_.theta;
    const double sig_test = sigmoid(-z_test.y * simd::dot(theta, z_test.x));

    // H^-1 x_test, plus H^-1 theta for the terms the folded-in L2 penalty
    // adds to every gradient.
    const Vector hinv_xt = solver_.solve(z_test.x).s;
    Vector hinv_theta(theta.size(), 0.0);
    if (spec.l2 != 0.0) hinv_theta = solver_.solve(theta).s;
    const double l2 = spec.l2;
    const double theta_hinv_theta = simd::dot(theta, hinv_theta);
    const double xt_hinv_theta = simd::dot(z_test.x, hinv_theta);

    std::vector<VariantRow> rows(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto z = data[i];
        const double sig_i = sigmoid(-z.y * simd::dot(theta, z.x));
        const double yy = z_test.y * z.y;
        const double quad = simd::dot(hinv_xt, z.x);
        const double dot_x = simd::dot(z_test.x, z.x);
        // grad L = -sigma(-y theta.x) y x + l2 theta
        const double reg = l2 * sig_test * z_test.y * xt_hinv_theta +
                           l2 * sig_i * z.y * simd::dot(hinv_theta, z.x) - l2 * l2 * theta_hinv_theta;
        rows[i].train_idx = i;
        rows[i].full = -yy * sig_test * sig_i * quad + reg;
        rows[i].no_train_loss = -yy * sig_test * quad;
        rows[i].identity_hessian = -yy * sig_test * sig_i * dot_x;
        rows[i].scaled_dot = yy * sig_test * dot_x;
    }
    return rows;
}

Vector s_test(const ModelArtifact& artifact, const Dataset& data, ExampleRef z_test, const IhvpConfig& config) {
    InfluenceEngine engine(artifact, data, config);
    return engine.s_test(z_test);
}

Vector influence_up_params(const ModelArtifact& artifact, const Dataset& data, ExampleRef z,
                           const IhvpConfig& config) {
    return InfluenceEngine(artifact, data, config).up_params(z);
}

InfluenceReport influence_up_loss_batch(const ModelArtifact& artifact, const Dataset& data, ExampleRef z_test,
                                        const IhvpConfig& config, std::string target) {
    InfluenceEngine engine(artifact, data, config);
    return engine.up_loss_batch(z_test, std::move(target));
}

Vector influence_pert_loss(const ModelArtifact& artifact, const Dataset& data, ExampleRef z, ExampleRef z_test,
                           const IhvpConfig& config) {
    InfluenceEngine engine(artifact, data, config);
    return engine.pert_loss(z, z_test);
}

std::vector<VariantRow> influence_variants(const ModelArtifact& artifact, const Dataset& data, ExampleRef z_test,
                                           const IhvpConfig& config) {
    InfluenceEngine engine(artifact, data, config);
    return engine.variants(z_test);
}

}  // namespace influence
