#include "influence/ihvp.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "influence/kernels.hpp"
#include "influence/parallel.hpp"

namespace influence {

std::string_view ihvp_method_name(IhvpMethod method) {
    switch (method) {
        case IhvpMethod::explicit_solve: return "explicit";
        case IhvpMethod::cg: return "cg";
        case IhvpMethod::lissa: return "lissa";
    }
    return "unknown";
}

IhvpMethod parse_ihvp_method(std::string_view name) {
    if (name == "explicit") return IhvpMethod::explicit_solve;
    if (name == "cg") return IhvpMethod::cg;
    if (name == "lissa") return IhvpMethod::lissa;
    throw DataError("unknown ihvp method '" + std::string(name) + "'");
}

void IhvpConfig::validate() const {
    if (!(damping >= 0.0) || !std::isfinite(damping)) throw DataError("damping must be non-negative");
    if (!(cg.tol_residual > 0.0)) throw DataError("cg tolerance must be positive");
    if (cg.max_iters <= 0) throw DataError("cg max_iters must be positive");
    if (lissa.depth < 1) throw DataError("lissa depth must be at least 1");
    if (lissa.repeats < 1) throw DataError("lissa repeats must be at least 1");
    if (lissa.batch < 1) throw DataError("lissa batch must be at least 1");
    if (lissa.scale && !(*lissa.scale > 0.0)) throw DataError("lissa scale must be positive");
}

double default_lissa_scale(const ModelSpec& spec, const Dataset& data, double damping) {
    double max_sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.row(i);
        max_sq = std::max(max_sq, simd::dot(x, x));
    }
    double curvature = 0.0;
    switch (spec.family) {
        case Family::binary_logistic: curvature = max_sq / 4.0; break;
        case Family::smooth_hinge: curvature = max_sq / (4.0 * spec.temperature); break;
        case Family::multinomial_logistic: curvature = max_sq / 2.0; break;
        case Family::ridge: curvature = max_sq; break;
        case Family::hinge: break;
    }
    return 10.0 * (spec.l2 + damping + curvature);
}

struct IhvpSolver::Factor {
    Eigen::MatrixXd matrix;
    Eigen::LLT<Eigen::MatrixXd> llt;
};

IhvpSolver::IhvpSolver(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                       IhvpConfig config)
    : spec_(spec), theta_(theta.begin(), theta.end()), data_(&data), config_(config),
      hessian_(spec, theta, data) {
    config_.validate();
    if (config_.method != IhvpMethod::explicit_solve) return;
    const std::size_t p = theta_.size();
    if (p > kExplicitMaxParams) {
        throw DataError("explicit inverse needs p <= " + std::to_string(kExplicitMaxParams) + ", got " +
                        std::to_string(p) + "; use cg or lissa");
    }
    factor_ = std::make_unique<Factor>();
    const Vector dense = hessian_.dense();
    factor_->matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        dense.data(), static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    factor_->matrix.diagonal().array() += config_.damping;
    factor_->llt.compute(factor_->matrix);
    if (factor_->llt.info() != Eigen::Success) {
        throw NumericalError("H + damping*I is not positive definite (damping = " +
                             std::to_string(config_.damping) + "); increase the damping");
    }
}

IhvpSolver::~IhvpSolver() = default;
IhvpSolver::IhvpSolver(IhvpSolver&&) noexcept = default;
IhvpSolver& IhvpSolver::operator=(IhvpSolver&&) noexcept = default;

Vector IhvpSolver::multiply(std::span<const double> v) const {
    Vector out = hessian_.apply(v);
    simd::axpy(config_.damping, v, out);
    return out;
}

namespace {

double relative_residual(const IhvpSolver& solver, std::span<const double> s, std::span<const double> v) {
    const double vnorm = simd::norm2(v);
    if (vnorm == 0.0) return 0.0;
    Vector r = solver.multiply(s);
    simd::axpy(-1.0, v, r);
    return simd::norm2(r) / vnorm;
}

bool all_zero(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

IhvpResult IhvpSolver::solve(std::span<const double> v) const {
    if (v.size() != theta_.size()) throw DataError("right-hand side has wrong length");
    switch (config_.method) {
        case IhvpMethod::explicit_solve: return solve_explicit(v);
        case IhvpMethod::cg: return solve_cg(v);
        case IhvpMethod::lissa: return solve_lissa(v);
    }
    throw DataError("unknown ihvp method");
}

IhvpResult IhvpSolver::solve_explicit(std::span<const double> v) const {
    const auto p = static_cast<Eigen::Index>(v.size());
    const Eigen::Map<const Eigen::VectorXd> rhs(v.data(), p);
    Eigen::VectorXd sol = factor_->llt.solve(rhs);
    // One step of iterative refinement against the unfactored matrix.
    const Eigen::VectorXd resid = rhs - factor_->matrix * sol;
    sol += factor_->llt.solve(resid);

    IhvpResult out;
    out.s.assign(sol.data(), sol.data() + p);
    out.diagnostics.method = IhvpMethod::explicit_solve;
    out.diagnostics.damping = config_.damping;
    const Eigen::VectorXd final_resid = rhs - factor_->matrix * sol;
    const double vnorm = rhs.norm();
    out.diagnostics.residual = vnorm == 0.0 ? 0.0 : final_resid.norm() / vnorm;
    return out;
}

IhvpResult IhvpSolver::solve_cg(std::span<const double> v) const {
    const std::size_t p = v.size();
    IhvpResult out;
    out.s.assign(p, 0.0);
    out.diagnostics.method = IhvpMethod::cg;
    out.diagnostics.damping = config_.damping;
    if (all_zero(v)) return out;

    Vector r(v.begin(), v.end());
    Vector d = r;
    Vector ad(p);
    double rr = simd::dot(r, r);
    const double target = config_.cg.tol_residual * simd::norm2(v);
    int it = 0;
    while (std::sqrt(rr) > target && it < config_.cg.max_iters) {
        hessian_.apply(d, ad);
        simd::axpy(config_.damping, d, ad);
        const double curv = simd::dot(d, ad);
        if (!(curv > 0.0)) {
            throw NumericalError("negative curvature in conjugate gradients (d'(H + damping I)d = " +
                                 std::to_string(curv) + "); add damping");
        }
        const double alpha = rr / curv;
        simd::axpy(alpha, d, out.s);
        simd::axpy(-alpha, ad, r);
        const double rr_new = simd::dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < p; ++i) d[i] = r[i] + beta * d[i];
        ++it;
    }
    out.diagnostics.iterations = it;
    out.diagnostics.residual = relative_residual(*this, out.s, v);
    return out;
}

IhvpResult IhvpSolver::solve_lissa(std::span<const double> v) const {
    const auto& opt = config_.lissa;
    const std::size_t p = v.size();
    const double scale = opt.scale ? *opt.scale : default_lissa_scale(spec_, *data_, config_.damping);
    IhvpDiagnostics diag;
    diag.method = IhvpMethod::lissa;
    diag.damping = config_.damping;
    diag.depth = opt.depth;
    diag.repeats = opt.repeats;
    diag.iterations = opt.depth * opt.repeats;
    diag.scale = scale;
    diag.seed = opt.seed;

    IhvpResult out;
    out.s.assign(p, 0.0);
    if (all_zero(v)) {
        out.diagnostics = diag;
        return out;
    }
    const Dataset& data = *data_;
    const double vnorm = simd::norm2(v);
    const double limit = 1e6 * vnorm;
    const auto repeats = static_cast<std::size_t>(opt.repeats);
    std::vector<Vector> estimates(repeats);
    std::vector<char> diverged(repeats, 0);

    parallel_for(repeats, [&](std::size_t r) {
        std::mt19937_64 rng(opt.seed + r);
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        Vector cur(v.begin(), v.end());
        Vector h(p);
        const double inv_batch = 1.0 / static_cast<double>(opt.batch);
        for (int j = 0; j < opt.depth; ++j) {
            std::fill(h.begin(), h.end(), 0.0);
            for (int b = 0; b < opt.batch; ++b) {
                hvp_accumulate(spec_, theta_, data[pick(rng)], cur, inv_batch, h);
            }
            simd::axpy(config_.damping, cur, h);
            // cur <- v + (I - H_sample / scale) cur
            for (std::size_t i = 0; i < p; ++i) cur[i] = v[i] + cur[i] - h[i] / scale;
            const double norm = simd::norm2(cur);
            if (!std::isfinite(norm) || norm > limit) {
                diverged[r] = 1;
                return;
            }
        }
        simd::scale(1.0 / scale, cur);
        estimates[r] = std::move(cur);
    });

    for (std::size_t r = 0; r < repeats; ++r) {
        if (diverged[r]) {
            diag.diverged = true;
            diag.residual = std::numeric_limits<double>::quiet_NaN();
            throw IhvpDivergence("LiSSA recursion diverged (scale = " + std::to_string(scale) +
                                     "); use a larger scale so the scaled Hessian stays below I",
                                 diag);
        }
    }
    for (std::size_t r = 0; r < repeats; ++r) simd::axpy(1.0, estimates[r], out.s);
    simd::scale(1.0 / static_cast<double>(repeats), out.s);
    diag.residual = relative_residual(*this, out.s, v);
    out.diagnostics = diag;
    return out;
}

IhvpResult ihvp_explicit(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                         std::span<const double> v, double damping) {
    IhvpConfig config;
    config.method = IhvpMethod::explicit_solve;
    config.damping = damping;
    return IhvpSolver(spec, theta, data, config).solve(v);
}

IhvpResult ihvp_cg(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                   std::span<const double> v, const IhvpConfig& config) {
    IhvpConfig c = config;
    c.method = IhvpMethod::cg;
    return IhvpSolver(spec, theta, data, c).solve(v);
}

IhvpResult ihvp_lissa(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> v, const IhvpConfig& config) {
    IhvpConfig c = config;
    c.method = IhvpMethod::lissa;
    return IhvpSolver(spec, theta, data, c).solve(v);
}

IhvpResult solve_ihvp(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> v, const IhvpConfig& config) {
    return IhvpSolver(spec, theta, data, config).solve(v);
}

}  // namespace influence
