#pragma once

#include <span>
#include <string>
#include <string_view>

#include "influence/dataset.hpp"

namespace influence {

enum class Family {
    binary_logistic,
    multinomial_logistic,
    smooth_hinge,
    hinge,  // loss evaluation only
    ridge,
};

std::string_view family_name(Family family);
/// Throws DataError for unknown names.
Family parse_family(std::string_view name);

/// Loss family plus the L2 strength folded into every per-example loss:
/// L(z, theta) = base_loss(z, theta) + (l2 / 2) * |theta|^2.
struct ModelSpec {
    Family family = Family::binary_logistic;
    double l2 = 0.0;
    /// Smoothing temperature for smooth_hinge.
    double temperature = 1.0;
    /// Class count for multinomial_logistic.
    int n_classes = 2;

    /// Parameter count p for feature dimension d.
    std::size_t n_params(std::size_t dim) const;
    bool differentiable() const { return family != Family::hinge; }
    /// Throws DataError for negative l2, non-positive temperature, bad k.
    void validate() const;
    /// Throws DataError if the dataset's task does not fit the family.
    void check_compatible(const Dataset& data) const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Numerically stable scalar helpers.
double sigmoid(double t);
/// log(1 + exp(a)) without overflow.
double softplus(double a);

// Per-example quantities. theta has length spec.n_params(z.x.size()).

double loss(const ModelSpec& spec, std::span<const double> theta, ExampleRef z);
Vector grad_theta(const ModelSpec& spec, std::span<const double> theta, ExampleRef z);
/// out = grad_theta; out.size() == p.
void grad_theta_into(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                     std::span<double> out);
Vector hvp(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
           std::span<const double> v);
/// out += weight * H_z v
void hvp_accumulate(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                    std::span<const double> v, double weight, std::span<double> out);
/// s^T (d/dx grad_theta L(z, theta)), a vector of length d.
Vector grad_x_grad_theta_left(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                              std::span<const double> s);

/// Class prediction: +1/-1 for binary families, argmax class for
/// multinomial, the fitted value for ridge.
double predict(const ModelSpec& spec, std::span<const double> theta, std::span<const double> x);

// Empirical quantities over a dataset: (1/n) sum_i w_i * q(z_i) in index
// order, where n = data.size() and w defaults to all ones. Removal of
// example j is w_j = 0; upweighting by eps is w_j = 1 + n * eps.

double empirical_risk(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> weights = {});
Vector empirical_grad(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> weights = {});
Vector empirical_hvp(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                     std::span<const double> v, std::span<const double> weights = {});

/// Empirical Hessian frozen at one theta. Per-example curvature is computed
/// once so repeated products (CG, Newton-CG) cost two matrix-vector passes
/// and never form the matrix.
class EmpiricalHessian {
  public:
    EmpiricalHessian(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                     std::span<const double> weights = {});

    std::size_t dim() const { return n_params_; }
    void apply(std::span<const double> v, std::span<double> out) const;
    Vector apply(std::span<const double> v) const;
    /// Dense p x p row-major matrix. Only for small p.
    Vector dense() const;

  private:
    ModelSpec spec_;
    const Dataset* data_;
    std::size_t n_params_ = 0;
    double ridge_weight_ = 0.0;  // l2 * sum(w) / n
    Vector curvature_;           // per-example scalar curvature (binary GLMs, ridge)
    Vector probs_;               // n x k softmax outputs (multinomial)
    Vector weights_;             // w_i / n (multinomial)
};

}  // namespace influence
