#include "doctest.h"

#include <random>

#include "influence/error.hpp"
#include "influence/ihvp.hpp"
#include "influence/kernels.hpp"
#include "influence/trainer.hpp"
#include "support.hpp"

using namespace influence;
using testing::rel_err;

namespace {

struct Problem {
    Dataset data;
    ModelArtifact model;
    Vector v;
};

Problem logistic_problem(std::size_t n, std::size_t d, std::uint64_t seed) {
    Problem p;
    p.data = testing::random_binary(n, d, seed);
    p.model = train(ModelSpec{Family::binary_logistic, 0.05, 1.0, 2}, p.data);
    std::mt19937_64 rng(seed + 1);
    p.v = testing::normal_vector(rng, d);
    return p;
}

IhvpConfig config_for(IhvpMethod method) {
    IhvpConfig c;
    c.method = method;
    return c;
}

}  // namespace

TEST_SUITE("ihvp") {

TEST_CASE("ridge-only Hessian gives v / (l2 + damping) on every backend") {
    const Dataset zeros(3, Task::regression, 0, Vector(15, 0.0), Vector{1, 2, 3, 4, 5});
    const ModelSpec spec{Family::ridge, 0.4, 1.0, 2};
    const Vector theta{0.1, 0.2, 0.3};
    const Vector v{1.0, -2.0, 0.5};
    for (double damping : {0.0, 0.1}) {
        for (IhvpMethod m : {IhvpMethod::explicit_solve, IhvpMethod::cg, IhvpMethod::lissa}) {
            IhvpConfig c = config_for(m);
            c.damping = damping;
            c.lissa.depth = 2000;
            c.lissa.repeats = 1;
            const Vector s = solve_ihvp(spec, theta, zeros, v, c).s;
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(s[j] == doctest::Approx(v[j] / (0.4 + damping)).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("explicit solve multiplies back to v") {
    const Problem p = logistic_problem(200, 10, 1);
    const IhvpResult r = ihvp_explicit(p.model.spec, p.model.theta, p.data, p.v, 0.0);
    const Vector back = empirical_hvp(p.model.spec, p.model.theta, p.data, r.s);
    CHECK(rel_err(back, p.v) <= 1e-10);
    CHECK(r.diagnostics.residual <= 1e-10);
}

TEST_CASE("large damping dominates") {
    const Problem p = logistic_problem(100, 5, 2);
    const Vector s = ihvp_explicit(p.model.spec, p.model.theta, p.data, p.v, 1e6).s;
    Vector expected = p.v;
    simd::scale(1e-6, expected);
    CHECK(rel_err(s, expected) <= 1e-3);
}

TEST_CASE("cg terminates within p iterations and agrees with explicit") {
    const Problem p = logistic_problem(200, 10, 3);
    IhvpConfig c = config_for(IhvpMethod::cg);
    c.cg.tol_residual = 1e-10;
    const IhvpResult r = ihvp_cg(p.model.spec, p.model.theta, p.data, p.v, c);
    CHECK(r.diagnostics.iterations <= 10);
    CHECK(r.diagnostics.residual <= 1e-10);
    const Vector exact = ihvp_explicit(p.model.spec, p.model.theta, p.data, p.v, 0.0).s;
    c.cg.tol_residual = 1e-8;
    CHECK(rel_err(ihvp_cg(p.model.spec, p.model.theta, p.data, p.v, c).s, exact) <= 1e-6);
}

TEST_CASE("zero right-hand side") {
    const Problem p = logistic_problem(50, 4, 4);
    const Vector zero(4, 0.0);
    const IhvpResult r = ihvp_cg(p.model.spec, p.model.theta, p.data, zero, config_for(IhvpMethod::cg));
    CHECK(r.diagnostics.iterations == 0);
    for (double s : r.s) CHECK(s == 0.0);
    for (double s : ihvp_lissa(p.model.spec, p.model.theta, p.data, zero, config_for(IhvpMethod::lissa)).s) {
        CHECK(s == 0.0);
    }
}

TEST_CASE("damping shrinks the solution") {
    const Problem p = logistic_problem(100, 6, 5);
    double prev = INFINITY;
    for (double damping : {0.0, 0.01, 0.1, 1.0, 10.0}) {
        const double norm = simd::norm2(ihvp_explicit(p.model.spec, p.model.theta, p.data, p.v, damping).s);
        CHECK(norm <= prev);
        prev = norm;
    }
}

TEST_CASE("lissa on a single example converges to the explicit solve") {
    const Dataset one(3, Task::binary, 2, Vector{0.5, -1.0, 2.0}, Vector{1.0});
    const ModelSpec spec{Family::binary_logistic, 0.5, 1.0, 2};
    const Vector theta{0.2, 0.1, -0.3};
    const Vector v{1.0, 0.5, -0.25};
    IhvpConfig c = config_for(IhvpMethod::lissa);
    c.lissa.depth = 1000;
    c.lissa.repeats = 1;
    c.lissa.scale = 4.0;
    const Vector s = ihvp_lissa(spec, theta, one, v, c).s;
    CHECK(rel_err(s, ihvp_explicit(spec, theta, one, v, 0.0).s) <= 1e-3);
}

TEST_CASE("lissa is unbiased across seeds") {
    const Problem p = logistic_problem(100, 4, 6);
    const Vector exact = ihvp_explicit(p.model.spec, p.model.theta, p.data, p.v, 0.0).s;
    IhvpConfig c = config_for(IhvpMethod::lissa);
    c.lissa.depth = 1500;
    c.lissa.repeats = 1;
    const int seeds = 50;
    Vector sum(4, 0.0);
    Vector sum_sq(4, 0.0);
    for (int k = 0; k < seeds; ++k) {
        c.lissa.seed = 1000 + static_cast<std::uint64_t>(k);
        const Vector s = ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c).s;
        for (std::size_t j = 0; j < 4; ++j) {
            sum[j] += s[j];
            sum_sq[j] += s[j] * s[j];
        }
    }
    for (std::size_t j = 0; j < 4; ++j) {
        const double mean = sum[j] / seeds;
        const double var = (sum_sq[j] - seeds * mean * mean) / (seeds - 1);
        const double se = std::sqrt(var / seeds);
        CAPTURE(j);
        CHECK(std::abs(mean - exact[j]) <= 2.0 * se);
    }
}

TEST_CASE("lissa is reproducible per seed and varies across seeds") {
    const Problem p = logistic_problem(80, 4, 7);
    IhvpConfig c = config_for(IhvpMethod::lissa);
    c.lissa.depth = 400;
    c.lissa.repeats = 3;
    c.lissa.seed = 13;
    const Vector a = ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c).s;
    const Vector b = ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c).s;
    CHECK(a == b);
    c.lissa.seed = 14;
    CHECK(ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c).s != a);
    c.lissa.batch = 4;
    const IhvpResult batched = ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c);
    CHECK(batched.diagnostics.iterations == 400 * 3);
    CHECK(batched.diagnostics.repeats == 3);
}

TEST_CASE("lissa divergence is reported") {
    const Problem p = logistic_problem(80, 4, 8);
    IhvpConfig c = config_for(IhvpMethod::lissa);
    c.lissa.scale = 1e-3;
    c.lissa.depth = 500;
    try {
        ihvp_lissa(p.model.spec, p.model.theta, p.data, p.v, c);
        FAIL("expected divergence");
    } catch (const IhvpDivergence& e) {
        CHECK(e.diagnostics.diverged);
        CHECK(std::string(e.what()).find("scale") != std::string::npos);
    }
}

TEST_CASE("singular Hessian is rejected") {
    const Dataset zeros(2, Task::regression, 0, Vector(6, 0.0), Vector{1, 2, 3});
    const ModelSpec spec{Family::ridge, 0.0, 1.0, 2};
    const Vector theta{0.0, 0.0};
    const Vector v{1.0, 1.0};
    CHECK_THROWS_AS(ihvp_cg(spec, theta, zeros, v, config_for(IhvpMethod::cg)), NumericalError);
    CHECK_THROWS_AS(ihvp_explicit(spec, theta, zeros, v, 0.0), NumericalError);
    CHECK_NOTHROW(ihvp_explicit(spec, theta, zeros, v, 0.01));
}

TEST_CASE("configuration validation") {
    IhvpConfig c;
    c.damping = -1.0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = IhvpConfig{};
    c.lissa.depth = 0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = IhvpConfig{};
    c.lissa.repeats = 0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = IhvpConfig{};
    c.lissa.scale = 0.0;
    CHECK_THROWS_AS(c.validate(), DataError);
    CHECK_THROWS_AS(parse_ihvp_method("newton"), DataError);
    CHECK(parse_ihvp_method("cg") == IhvpMethod::cg);
}

TEST_CASE("explicit backend refuses very large parameter counts") {
    const std::size_t d = kExplicitMaxParams + 1;
    const Dataset big(d, Task::binary, 2, Vector(d, 0.5), Vector{1.0});
    const Vector theta(d, 0.0);
    CHECK_THROWS_AS(ihvp_explicit(ModelSpec{Family::binary_logistic, 0.1, 1.0, 2}, theta, big, theta, 0.0),
                    DataError);
}

TEST_CASE("default lissa scale bounds the per-example curvature") {
    const Dataset data(2, Task::binary, 2, Vector{3, 4, 1, 0}, Vector{1, -1});
    const ModelSpec spec{Family::binary_logistic, 0.1, 1.0, 2};
    CHECK(default_lissa_scale(spec, data, 0.2) == doctest::Approx(10.0 * (0.1 + 0.2 + 25.0 / 4.0)));
}

TEST_CASE("solver object reuses its factorization") {
    const Problem p = logistic_problem(60, 5, 9);
    const IhvpSolver solver(p.model.spec, p.model.theta, p.data, IhvpConfig{});
    const Vector s = solver.solve(p.v).s;
    CHECK(rel_err(solver.multiply(s), p.v) <= 1e-10);
}

}
