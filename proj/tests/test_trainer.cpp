#include "doctest.h"

#include <Eigen/Dense>
#include <random>

#include "influence/ihvp.hpp"
#include "influence/influence.hpp"
#include "influence/kernels.hpp"
#include "influence/stats.hpp"
#include "influence/synth.hpp"
#include "influence/trainer.hpp"
#include "support.hpp"

using namespace influence;
using testing::rel_err;

namespace {

Vector ridge_closed_form(const Dataset& data, double l2, std::span<const double> weights = {}) {
    const auto n = static_cast<Eigen::Index>(data.size());
    const auto d = static_cast<Eigen::Index>(data.dim());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    double wsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
        wsum += w;
        const auto row = data.row(static_cast<std::size_t>(i));
        const Eigen::Map<const Eigen::VectorXd> x(row.data(), d);
        a += w * x * x.transpose();
        b += w * data[static_cast<std::size_t>(i)].y * x;
    }
    a /= static_cast<double>(n);
    b /= static_cast<double>(n);
    // l2 is folded into every weighted per-example loss.
    a.diagonal().array() += l2 * wsum / static_cast<double>(n);
    const Eigen::VectorXd t = a.ldlt().solve(b);
    return Vector(t.data(), t.data() + d);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("ridge matches the normal equations") {
    const Dataset data = testing::random_regression(10, 3, 1);
    const ModelSpec spec{Family::ridge, 0.05, 1.0, 2};
    const ModelArtifact m = train(spec, data);
    CHECK(rel_err(m.theta, ridge_closed_form(data, 0.05)) <= 1e-8);
    CHECK(m.train_meta.grad_norm <= 1e-8);
}

TEST_CASE("separable binary data converges with l2") {
    Vector x;
    Vector y;
    for (int i = 0; i < 40; ++i) {
        const double s = i % 2 == 0 ? 1.0 : -1.0;
        x.push_back(s * (1.0 + 0.05 * i));
        x.push_back(0.3 * std::sin(i));
        y.push_back(s);
    }
    const Dataset data(2, Task::binary, 2, x, y);
    const ModelArtifact m = train(ModelSpec{Family::binary_logistic, 0.01, 1.0, 2}, data);
    CHECK(m.train_meta.grad_norm <= 1e-8);
    CHECK(simd::norm2(empirical_grad(m.spec, m.theta, data)) <= 1e-8);
}

TEST_CASE("warm start at the solution returns immediately") {
    const Dataset data = testing::random_binary(80, 4, 2);
    const ModelSpec spec{Family::binary_logistic, 0.01, 1.0, 2};
    const ModelArtifact m = train(spec, data);
    TrainConfig warm;
    warm.warm_start = m.theta;
    const ModelArtifact again = train(spec, data, warm);
    CHECK(again.train_meta.iterations <= 1);
    CHECK(again.theta == m.theta);
}

TEST_CASE("training is bitwise deterministic") {
    const Dataset data = testing::random_multiclass(90, 4, 3, 3);
    const ModelSpec spec{Family::multinomial_logistic, 0.01, 1.0, 3};
    CHECK(train(spec, data).theta == train(spec, data).theta);
    TrainConfig lbfgs;
    lbfgs.method = Optimizer::lbfgs;
    lbfgs.max_iters = 1000;
    CHECK(train(spec, data, lbfgs).theta == train(spec, data, lbfgs).theta);
}

TEST_CASE("optimizers agree") {
    const Dataset data = testing::random_binary(100, 5, 4);
    for (const ModelSpec& spec : {ModelSpec{Family::binary_logistic, 0.01, 1.0, 2},
                                  ModelSpec{Family::smooth_hinge, 0.01, 0.1, 2}}) {
        TrainConfig lbfgs;
        lbfgs.method = Optimizer::lbfgs;
        lbfgs.max_iters = 2000;
        const ModelArtifact a = train(spec, data);
        const ModelArtifact b = train(spec, data, lbfgs);
        CHECK(rel_err(b.theta, a.theta) <= 1e-6);
    }
}

TEST_CASE("trained objective beats 100 random probes") {
    const Dataset data = testing::random_binary(60, 3, 5);
    const ModelSpec spec{Family::binary_logistic, 0.1, 1.0, 2};
    const ModelArtifact m = train(spec, data);
    const double best = empirical_risk(spec, m.theta, data);
    std::mt19937_64 rng(6);
    for (int k = 0; k < 100; ++k) {
        Vector probe = m.theta;
        const Vector step = testing::normal_vector(rng, 3, k < 50 ? 1e-3 : 1.0);
        for (std::size_t j = 0; j < 3; ++j) probe[j] += step[j];
        CHECK(empirical_risk(spec, probe, data) >= best);
    }
}

TEST_CASE("iteration cap raises with the last iterate") {
    const Dataset data = testing::random_binary(60, 3, 7);
    TrainConfig config;
    config.max_iters = 1;
    config.tol_grad = 1e-14;
    try {
        train(ModelSpec{Family::binary_logistic, 0.01, 1.0, 2}, data, config);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(e.last_theta.size() == 3);
        CHECK(e.grad_norm > 1e-14);
        CHECK(e.iterations == 1);
    }
}

TEST_CASE("invalid training requests") {
    const Dataset data = testing::random_binary(10, 2, 8);
    CHECK_THROWS_AS(train(ModelSpec{Family::hinge, 0.01, 1.0, 2}, data), std::exception);
    TrainConfig bad;
    bad.tol_grad = 0.0;
    CHECK_THROWS_AS(train(ModelSpec{}, data, bad), DataError);
    TrainConfig wrong_warm;
    wrong_warm.warm_start = Vector{1.0};
    CHECK_THROWS_AS(train(ModelSpec{}, data, wrong_warm), DataError);
}

TEST_CASE("weighted ridge removal matches the closed form without the point") {
    const Dataset data = testing::random_regression(15, 3, 9);
    const ModelSpec spec{Family::ridge, 0.1, 1.0, 2};
    const ModelArtifact base = train(spec, data);
    TrainConfig tight;
    tight.tol_grad = 1e-13;
    const LooResult r = retrain_loo(data, base, 4, {}, tight);
    Vector w(15, 1.0);
    w[4] = 0.0;
    CHECK(rel_err(r.theta_minus, ridge_closed_form(data, 0.1, w)) <= 1e-10);
    CHECK(r.removed_idx == 4);
}

TEST_CASE("reinserting at weight one returns the base model") {
    const Dataset data = testing::random_binary(50, 3, 10);
    const ModelArtifact base = train(ModelSpec{Family::binary_logistic, 0.01, 1.0, 2}, data);
    CHECK(retrain_upweighted(data, base, 3, 0.0) == base.theta);
}

TEST_CASE("removing a zero-gradient point leaves the test loss unchanged") {
    // With l2 = 0 a zero feature row has zero gradient at every theta.
    const Dataset data = testing::with_zero_row(testing::random_binary(60, 3, 11), 1.0);
    const ModelArtifact base = train(ModelSpec{Family::binary_logistic, 0.0, 1.0, 2}, data);
    const std::vector<Example> tests{data.example(0), data.example(1)};
    const LooResult r = retrain_loo(data, base, data.size() - 1, tests);
    for (double d : r.loss_delta) CHECK(std::abs(d) <= 1e-6);
}

TEST_CASE("LOO deltas correlate with influence on a small logistic problem") {
    // At n = 20 one removal is a 5% reweighting; l2 = 0.5 keeps it in the
    // first-order regime.
    const Dataset data = make_synthetic("synth:logistic:n=20,d=5,seed=3");
    const ModelSpec spec{Family::binary_logistic, 0.5, 1.0, 2};
    TrainConfig tight;
    tight.tol_grad = 1e-12;
    const ModelArtifact base = train(spec, data, tight);
    const Example z_test = make_synthetic("synth:logistic:n=1,d=5,seed=103").example(0);
    const InfluenceReport report = influence_up_loss_batch(base, data, z_test.view(), IhvpConfig{});
    Vector predicted;
    Vector actual;
    for (std::size_t i = 0; i < data.size(); ++i) {
        predicted.push_back(report.score_for(i).predicted_loo_delta);
        actual.push_back(retrain_loo(data, base, i, std::span(&z_test, 1), tight).loss_delta[0]);
    }
    CHECK(pearson_r(predicted, actual) >= 0.99);
}

TEST_CASE("removing one of two duplicates gives about half the effect of removing both") {
    const Dataset base_data = testing::random_binary(80, 3, 13);
    const Dataset data = testing::with_duplicate(base_data, 5);
    const ModelSpec spec{Family::binary_logistic, 0.01, 1.0, 2};
    TrainConfig tight;
    tight.tol_grad = 1e-12;
    const ModelArtifact base = train(spec, data, tight);
    const Example z_test = data.example(5);
    const double one = retrain_loo(data, base, 5, std::span(&z_test, 1), tight).loss_delta[0];
    Vector w(data.size(), 1.0);
    w[5] = 0.0;
    w[data.size() - 1] = 0.0;
    TrainConfig warm = tight;
    warm.warm_start = base.theta;
    const Vector both = train(spec, data, warm, w).theta;
    const double both_delta = loss(spec, both, z_test.view()) - loss(spec, base.theta, z_test.view());
    CHECK(std::abs(one - 0.5 * both_delta) <= 0.1 * std::abs(0.5 * both_delta));
}

TEST_CASE("early stopping returns a non-converged point") {
    const Dataset data = testing::random_binary(100, 4, 14);
    const ModelSpec spec{Family::binary_logistic, 0.01, 1.0, 2};
    const ModelArtifact tilde = train_early_stopped(spec, data, TrainConfig{}, 1e-2);
    const double g = simd::norm2(empirical_grad(spec, tilde.theta, data));
    CHECK(g > 1e-8);
    CHECK(g <= 1e-2);
    CHECK(tilde.train_meta.grad_norm == doctest::Approx(g));
    CHECK_THROWS_AS(train_early_stopped(spec, data, TrainConfig{}, 1e-9), DataError);
}

TEST_CASE("Newton step from the early-stopped point") {
    TrainConfig tight;
    tight.tol_grad = 1e-13;
    {
        const Dataset data = testing::random_regression(30, 4, 15);
        const ModelSpec spec{Family::ridge, 0.1, 1.0, 2};
        const ModelArtifact tilde = train_early_stopped(spec, data, TrainConfig{}, 1e-2);
        Vector g = empirical_grad(spec, tilde.theta, data);
        simd::scale(-1.0, g);
        const Vector step = ihvp_explicit(spec, tilde.theta, data, g, 0.0).s;
        Vector move = train(spec, data, tight).theta;
        simd::axpy(-1.0, tilde.theta, move);
        CHECK(rel_err(step, move) <= 1e-6);
    }
    {
        const Dataset data = testing::random_binary(200, 4, 16);
        const ModelSpec spec{Family::binary_logistic, 0.01, 1.0, 2};
        // The step's relative error shrinks like |g|; it is about 5 |g| here.
        const ModelArtifact tilde = train_early_stopped(spec, data, TrainConfig{}, 1e-4);
        Vector g = empirical_grad(spec, tilde.theta, data);
        simd::scale(-1.0, g);
        const Vector step = ihvp_explicit(spec, tilde.theta, data, g, 0.0).s;
        Vector move = train(spec, data, tight).theta;
        simd::axpy(-1.0, tilde.theta, move);
        CHECK(rel_err(step, move) <= 1e-3);
    }
}

}
