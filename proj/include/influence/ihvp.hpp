#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "influence/error.hpp"
#include "influence/models.hpp"

namespace influence {

enum class IhvpMethod { explicit_solve, cg, lissa };

std::string_view ihvp_method_name(IhvpMethod method);
IhvpMethod parse_ihvp_method(std::string_view name);

struct CgOptions {
    /// Stop when |(H + damping I) t - v| <= tol_residual * |v|.
    double tol_residual = 1e-8;
    int max_iters = 1000;
};

struct LissaOptions {
    int depth = 5000;
    int repeats = 10;
    /// Divides the Hessian so every sampled curvature is below 1. Unset
    /// selects default_lissa_scale().
    std::optional<double> scale;
    int batch = 1;
    std::uint64_t seed = 0;
};

struct IhvpConfig {
    IhvpMethod method = IhvpMethod::explicit_solve;
    double damping = 0.0;
    CgOptions cg;
    LissaOptions lissa;

    /// Throws DataError on negative damping, non-positive depth etc.
    void validate() const;
};

struct IhvpDiagnostics {
    IhvpMethod method = IhvpMethod::explicit_solve;
    double damping = 0.0;
    /// CG iterations; depth * repeats for LiSSA; 0 for explicit.
    int iterations = 0;
    int depth = 0;
    int repeats = 0;
    double scale = 0.0;
    std::uint64_t seed = 0;
    /// |(H + damping I) s - v| / |v|, NaN when not computed.
    double residual = 0.0;
    bool diverged = false;
};

struct IhvpResult {
    Vector s;
    IhvpDiagnostics diagnostics;
};

/// LiSSA iterate blew up; the scale is too small for the curvature.
class IhvpDivergence : public NumericalError {
  public:
    IhvpDivergence(const std::string& what, IhvpDiagnostics diagnostics)
        : NumericalError(what), diagnostics(diagnostics) {}
    IhvpDiagnostics diagnostics;
};

/// LiSSA scale from an analytic bound on the per-example curvature, times
/// 10: binary logistic uses |x|^2/4, smooth hinge |x|^2/(4t), multinomial
/// |x|^2/2, ridge |x|^2; l2 and damping are added before the factor.
double default_lissa_scale(const ModelSpec& spec, const Dataset& data, double damping);

/// Solves (H + damping I) s = v for the empirical Hessian of one trained
/// point. Reuses its Hessian state (and the Cholesky factor for the explicit
/// backend) across calls, so one solver serves many right-hand sides.
class IhvpSolver {
  public:
    IhvpSolver(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
               IhvpConfig config);
    ~IhvpSolver();
    IhvpSolver(IhvpSolver&&) noexcept;
    IhvpSolver& operator=(IhvpSolver&&) noexcept;

    const IhvpConfig& config() const { return config_; }
    std::size_t dim() const { return theta_.size(); }

    IhvpResult solve(std::span<const double> v) const;
    /// (H + damping I) v
    Vector multiply(std::span<const double> v) const;

  private:
    IhvpResult solve_explicit(std::span<const double> v) const;
    IhvpResult solve_cg(std::span<const double> v) const;
    IhvpResult solve_lissa(std::span<const double> v) const;

    ModelSpec spec_;
    Vector theta_;
    const Dataset* data_;
    IhvpConfig config_;
    EmpiricalHessian hessian_;
    struct Factor;
    std::unique_ptr<Factor> factor_;  // explicit backend only
};

IhvpResult ihvp_explicit(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                         std::span<const double> v, double damping);
IhvpResult ihvp_cg(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                   std::span<const double> v, const IhvpConfig& config);
IhvpResult ihvp_lissa(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> v, const IhvpConfig& config);
IhvpResult solve_ihvp(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> v, const IhvpConfig& config);

/// Largest parameter count the explicit backend will materialize.
inline constexpr std::size_t kExplicitMaxParams = 2000;

}  // namespace influence
