#include "doctest.h"

#include <cmath>
#include <random>

#include "influence/error.hpp"
#include "influence/models.hpp"
#include "support.hpp"

using namespace influence;
using testing::rel_err;

namespace {

const ModelSpec kFamilies[] = {
    {Family::binary_logistic, 0.1, 1.0, 2},
    {Family::multinomial_logistic, 0.1, 1.0, 3},
    {Family::smooth_hinge, 0.1, 0.5, 2},
    {Family::smooth_hinge, 0.05, 0.1, 2},
    {Family::ridge, 0.1, 1.0, 2},
};

Example random_example(const ModelSpec& spec, std::mt19937_64& rng, std::size_t d) {
    Example z;
    z.features = testing::normal_vector(rng, d);
    if (spec.family == Family::multinomial_logistic) {
        z.label = std::uniform_int_distribution<int>(0, spec.n_classes - 1)(rng);
    } else if (spec.family == Family::ridge) {
        z.label = std::normal_distribution<double>(0.0, 1.0)(rng);
    } else {
        z.label = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    }
    return z;
}

Vector fd_grad(const ModelSpec& spec, const Vector& theta, ExampleRef z) {
    Vector g(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double h = 1e-5 * (1.0 + std::abs(theta[j]));
        Vector tp = theta;
        Vector tm = theta;
        tp[j] += h;
        tm[j] -= h;
        g[j] = (loss(spec, tp, z) - loss(spec, tm, z)) / (2.0 * h);
    }
    return g;
}

Vector fd_hvp(const ModelSpec& spec, const Vector& theta, ExampleRef z, const Vector& v) {
    const double h = 1e-5;
    Vector tp = theta;
    Vector tm = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        tp[j] += h * v[j];
        tm[j] -= h * v[j];
    }
    const Vector gp = grad_theta(spec, tp, z);
    const Vector gm = grad_theta(spec, tm, z);
    Vector out(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) out[j] = (gp[j] - gm[j]) / (2.0 * h);
    return out;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("logistic loss at theta = 0 is log 2") {
    const Vector x{0.3, -2.0};
    const Vector theta(2, 0.0);
    CHECK(loss(ModelSpec{Family::binary_logistic, 0.0, 1.0, 2}, theta, ExampleRef{x, 1.0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("smooth hinge at unit margin is t log 2 and hinge is 0") {
    const Vector x{1.0};
    const Vector theta{1.0};
    for (double t : {1.0, 0.1, 0.001}) {
        const ModelSpec s{Family::smooth_hinge, 0.0, t, 2};
        CHECK(loss(s, theta, ExampleRef{x, 1.0}) == doctest::Approx(t * std::log(2.0)).epsilon(1e-12));
    }
    CHECK(loss(ModelSpec{Family::hinge, 0.0, 1.0, 2}, theta, ExampleRef{x, 1.0}) == 0.0);
}

TEST_CASE("smooth hinge bounds the hinge and decreases monotonically with t") {
    const ModelSpec hinge{Family::hinge, 0.0, 1.0, 2};
    const Vector x{1.0};
    for (int i = 0; i <= 60; ++i) {
        const Vector theta{-3.0 + 0.1 * i};
        const ExampleRef z{x, 1.0};
        const double h = loss(hinge, theta, z);
        double prev = INFINITY;
        for (double t : {0.1, 0.01, 0.001}) {
            const double s = loss(ModelSpec{Family::smooth_hinge, 0.0, t, 2}, theta, z);
            // Equal up to rounding once the softplus tail underflows.
            CHECK(s >= h * (1.0 - 1e-15));
            CHECK(s <= prev * (1.0 + 1e-15));
            CHECK(s - h <= t * std::log(2.0) + 1e-15);
            prev = s;
        }
        // Far from the kink the small-temperature surrogate matches the hinge.
        if (std::abs(theta[0] - 1.0) > 0.05) {
            CHECK(std::abs(loss(ModelSpec{Family::smooth_hinge, 0.0, 0.001, 2}, theta, z) - h) < 1e-3);
        }
    }
}

TEST_CASE("hinge derivatives are unsupported") {
    const ModelSpec hinge{Family::hinge, 0.0, 1.0, 2};
    const Vector x{1.0, 2.0};
    const Vector theta{0.1, 0.2};
    const ExampleRef z{x, 1.0};
    CHECK_THROWS_AS(grad_theta(hinge, theta, z), UnsupportedOperation);
    CHECK_THROWS_AS(hvp(hinge, theta, z, theta), UnsupportedOperation);
    CHECK_THROWS_AS(grad_x_grad_theta_left(hinge, theta, z, theta), UnsupportedOperation);
    try {
        grad_theta(hinge, theta, z);
    } catch (const UnsupportedOperation& e) {
        CHECK(std::string(e.what()).find("smooth_hinge") != std::string::npos);
    }
}

TEST_CASE("closed forms at theta = 0") {
    const Vector x{0.5, -1.5, 2.0};
    const Vector v{1.0, 0.25, -0.5};
    const Vector theta(3, 0.0);
    const double l2 = 0.3;
    const ModelSpec s0{Family::binary_logistic, 0.0, 1.0, 2};
    const ModelSpec s{Family::binary_logistic, l2, 1.0, 2};
    for (double y : {-1.0, 1.0}) {
        const ExampleRef z{x, y};
        const Vector g = grad_theta(s0, theta, z);
        const Vector hv = hvp(s, theta, z, v);
        const Vector m = grad_x_grad_theta_left(s0, theta, z, v);
        const double xv = dot(x, v);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(g[j] == doctest::Approx(-0.5 * y * x[j]));
            CHECK(hv[j] == doctest::Approx(0.25 * xv * x[j] + l2 * v[j]));
            CHECK(m[j] == doctest::Approx(-0.5 * y * v[j]));
        }
    }
}

TEST_CASE("l2-only hessian is l2 times identity") {
    const ModelSpec s{Family::ridge, 0.7, 1.0, 2};
    const Vector x(4, 0.0);
    const Vector theta{1, 2, 3, 4};
    const Vector v{0.5, -1, 2, 0};
    const Vector hv = hvp(s, theta, ExampleRef{x, 0.3}, v);
    for (std::size_t j = 0; j < 4; ++j) CHECK(hv[j] == doctest::Approx(0.7 * v[j]));
}

TEST_CASE("gradients and HVPs match finite differences over 100 draws per family") {
    std::mt19937_64 rng(5);
    const std::size_t d = 5;
    for (const auto& spec : kFamilies) {
        double worst_g = 0.0;
        double worst_h = 0.0;
        for (int draw = 0; draw < 100; ++draw) {
            const Example z = random_example(spec, rng, d);
            const Vector theta = testing::normal_vector(rng, spec.n_params(d), 0.5);
            const Vector v = testing::normal_vector(rng, theta.size());
            worst_g = std::max(worst_g, rel_err(grad_theta(spec, theta, z.view()), fd_grad(spec, theta, z.view())));
            worst_h = std::max(worst_h, rel_err(hvp(spec, theta, z.view(), v), fd_hvp(spec, theta, z.view(), v)));
        }
        CAPTURE(family_name(spec.family));
        CHECK(worst_g <= 1e-5);
        CHECK(worst_h <= 1e-4);
    }
}

TEST_CASE("mixed derivative matches finite differences over x") {
    std::mt19937_64 rng(6);
    const std::size_t d = 4;
    for (const auto& spec : kFamilies) {
        for (int draw = 0; draw < 30; ++draw) {
            Example z = random_example(spec, rng, d);
            const Vector theta = testing::normal_vector(rng, spec.n_params(d), 0.5);
            const Vector s = testing::normal_vector(rng, theta.size());
            Vector fd(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double h = 1e-5;
                Example zp = z;
                Example zm = z;
                zp.features[j] += h;
                zm.features[j] -= h;
                fd[j] = (dot(s, grad_theta(spec, theta, zp.view())) - dot(s, grad_theta(spec, theta, zm.view()))) /
                        (2.0 * h);
            }
            CAPTURE(family_name(spec.family));
            CHECK(rel_err(grad_x_grad_theta_left(spec, theta, z.view(), s), fd) <= 1e-4);
        }
        const Example z = random_example(spec, rng, d);
        const Vector theta = testing::normal_vector(rng, spec.n_params(d));
        const Vector zero(theta.size(), 0.0);
        for (double v : grad_x_grad_theta_left(spec, theta, z.view(), zero)) CHECK(v == 0.0);
    }
}

TEST_CASE("HVPs are symmetric") {
    std::mt19937_64 rng(8);
    for (const auto& spec : kFamilies) {
        for (int draw = 0; draw < 20; ++draw) {
            const Example z = random_example(spec, rng, 6);
            const Vector theta = testing::normal_vector(rng, spec.n_params(6));
            const Vector u = testing::normal_vector(rng, theta.size());
            const Vector v = testing::normal_vector(rng, theta.size());
            const double a = dot(u, hvp(spec, theta, z.view(), v));
            const double b = dot(v, hvp(spec, theta, z.view(), u));
            CHECK(std::abs(a - b) <= 1e-10 * (1.0 + std::abs(a)));
        }
    }
}

TEST_CASE("empirical Hessian is at least l2 in every direction") {
    std::mt19937_64 rng(9);
    const Dataset bin = testing::random_binary(40, 5, 1);
    const Dataset multi = testing::random_multiclass(40, 5, 3, 2);
    const ModelSpec specs[] = {{Family::binary_logistic, 0.05, 1.0, 2},
                               {Family::smooth_hinge, 0.05, 0.01, 2},
                               {Family::multinomial_logistic, 0.05, 1.0, 3}};
    for (const auto& spec : specs) {
        const Dataset& data = spec.family == Family::multinomial_logistic ? multi : bin;
        const Vector theta = testing::normal_vector(rng, spec.n_params(5));
        for (int k = 0; k < 20; ++k) {
            const Vector v = testing::normal_vector(rng, theta.size());
            CHECK(dot(v, empirical_hvp(spec, theta, data, v)) >= spec.l2 * dot(v, v) * (1.0 - 1e-12));
        }
    }
}

TEST_CASE("multinomial gradient blocks sum to zero without l2") {
    std::mt19937_64 rng(10);
    const ModelSpec spec{Family::multinomial_logistic, 0.0, 1.0, 4};
    const std::size_t d = 3;
    for (int draw = 0; draw < 20; ++draw) {
        const Example z = random_example(spec, rng, d);
        const Vector theta = testing::normal_vector(rng, spec.n_params(d));
        const Vector g = grad_theta(spec, theta, z.view());
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (int c = 0; c < 4; ++c) s += g[c * d + j];
            CHECK(std::abs(s) <= 1e-12);
        }
    }
}

TEST_CASE("empirical quantities") {
    const Dataset one = testing::random_binary(1, 4, 3);
    const ModelSpec spec{Family::binary_logistic, 0.2, 1.0, 2};
    const Vector theta{0.1, -0.4, 0.3, 0.9};
    const Vector v{1, 2, 3, 4};
    CHECK(empirical_risk(spec, theta, one) == loss(spec, theta, one[0]));
    CHECK(empirical_grad(spec, theta, one) == grad_theta(spec, theta, one[0]));
    CHECK(rel_err(empirical_hvp(spec, theta, one, v), hvp(spec, theta, one[0], v)) <= 1e-15);

    // l2 folded into the spec equals an explicit ridge term added to the risk.
    const Dataset data = testing::random_binary(30, 4, 4);
    const ModelSpec bare{Family::binary_logistic, 0.0, 1.0, 2};
    CHECK(empirical_risk(spec, theta, data) ==
          doctest::Approx(empirical_risk(bare, theta, data) + 0.1 * dot(theta, theta)).epsilon(1e-14));

    // Weighted risk: removal is weight zero.
    Vector w(30, 1.0);
    w[7] = 0.0;
    double manual = 0.0;
    for (std::size_t i = 0; i < 30; ++i) {
        if (i != 7) manual += loss(spec, theta, data[i]);
    }
    CHECK(empirical_risk(spec, theta, data, w) == doctest::Approx(manual / 30.0).epsilon(1e-14));
}

TEST_CASE("dense empirical Hessian agrees with the analytic logistic formula") {
    const Dataset data = testing::random_binary(25, 6, 12);
    const ModelSpec spec{Family::binary_logistic, 0.03, 1.0, 2};
    std::mt19937_64 rng(13);
    const Vector theta = testing::normal_vector(rng, 6, 0.5);
    const Vector dense = EmpiricalHessian(spec, theta, data).dense();
    Vector oracle(36, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.row(i);
        double m = 0.0;
        for (std::size_t j = 0; j < 6; ++j) m += theta[j] * x[j];
        const double c = 1.0 / (1.0 + std::exp(-m)) / (1.0 + std::exp(m)) / 25.0;
        for (std::size_t a = 0; a < 6; ++a) {
            for (std::size_t b = 0; b < 6; ++b) oracle[a * 6 + b] += c * x[a] * x[b];
        }
    }
    for (std::size_t a = 0; a < 6; ++a) oracle[a * 6 + a] += 0.03;
    CHECK(rel_err(dense, oracle) <= 1e-12);

    const Vector v = testing::normal_vector(rng, 6);
    Vector hv(6, 0.0);
    for (std::size_t a = 0; a < 6; ++a) {
        for (std::size_t b = 0; b < 6; ++b) hv[a] += oracle[a * 6 + b] * v[b];
    }
    CHECK(rel_err(empirical_hvp(spec, theta, data, v), hv) <= 1e-10);
    CHECK(rel_err(EmpiricalHessian(spec, theta, data).apply(v), hv) <= 1e-10);
}

TEST_CASE("stable scalar helpers") {
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(std::isfinite(softplus(1e4)));
    CHECK(softplus(1e4) == doctest::Approx(1e4));
    CHECK(softplus(-1e4) >= 0.0);
    const ModelSpec s{Family::smooth_hinge, 0.0, 0.001, 2};
    const Vector x{1.0};
    const Vector theta{-5.0};
    CHECK(std::isfinite(loss(s, theta, ExampleRef{x, 1.0})));
    CHECK(std::isfinite(grad_theta(s, theta, ExampleRef{x, 1.0})[0]));
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS((ModelSpec{Family::binary_logistic, -0.1, 1.0, 2}.validate()), DataError);
    CHECK_THROWS_AS((ModelSpec{Family::smooth_hinge, 0.1, 0.0, 2}.validate()), DataError);
    CHECK_THROWS_AS((ModelSpec{Family::multinomial_logistic, 0.1, 1.0, 1}.validate()), DataError);
    CHECK_THROWS_AS(parse_family("svm"), DataError);
    CHECK(parse_family("smooth_hinge") == Family::smooth_hinge);
    CHECK(ModelSpec{Family::multinomial_logistic, 0.0, 1.0, 3}.n_params(4) == 12);
    CHECK_THROWS_AS(ModelSpec{}.check_compatible(testing::random_regression(5, 2, 1)), DataError);
}

}
