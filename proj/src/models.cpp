#include "influence/models.hpp"

#include <algorithm>
#include <cmath>

#include "influence/error.hpp"
#include "influence/kernels.hpp"

namespace influence {

std::string_view family_name(Family family) {
    switch (family) {
        case Family::binary_logistic: return "binary_logistic";
        case Family::multinomial_logistic: return "multinomial_logistic";
        case Family::smooth_hinge: return "smooth_hinge";
        case Family::hinge: return "hinge";
        case Family::ridge: return "ridge";
    }
    return "unknown";
}

Family parse_family(std::string_view name) {
    for (Family f : {Family::binary_logistic, Family::multinomial_logistic, Family::smooth_hinge,
                     Family::hinge, Family::ridge}) {
        if (family_name(f) == name) return f;
    }
    if (name == "logistic") return Family::binary_logistic;
    if (name == "multinomial") return Family::multinomial_logistic;
    throw DataError("unknown model family '" + std::string(name) + "'");
}

std::size_t ModelSpec::n_params(std::size_t dim) const {
    return family == Family::multinomial_logistic ? dim * static_cast<std::size_t>(n_classes) : dim;
}

void ModelSpec::validate() const {
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw DataError("l2 must be a non-negative finite number");
    if (family == Family::smooth_hinge && (!(temperature > 0.0) || !std::isfinite(temperature))) {
        throw DataError("smooth_hinge temperature must be positive");
    }
    if (family == Family::multinomial_logistic && n_classes < 2) {
        throw DataError("multinomial model needs at least 2 classes");
    }
}

void ModelSpec::check_compatible(const Dataset& data) const {
    validate();
    switch (family) {
        case Family::binary_logistic:
        case Family::smooth_hinge:
        case Family::hinge:
            if (data.task() != Task::binary) {
                throw DataError(std::string(family_name(family)) + " needs binary labels");
            }
            break;
        case Family::multinomial_logistic:
            if (data.task() == Task::regression || data.n_classes() != n_classes) {
                throw DataError("multinomial model expects " + std::to_string(n_classes) + " classes");
            }
            break;
        case Family::ridge: break;
    }
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

namespace {

[[noreturn]] void hinge_unsupported() {
    throw UnsupportedOperation(
        "hinge loss is not differentiable; use smooth_hinge for gradients and Hessians");
}

void check_dims(const ModelSpec& spec, std::span<const double> theta, ExampleRef z) {
    if (theta.size() != spec.n_params(z.x.size())) {
        throw DataError("parameter length " + std::to_string(theta.size()) +
                        " does not match model dimension " + std::to_string(spec.n_params(z.x.size())));
    }
}

// Binary margin losses written as phi(m), m = y * theta.x.
struct MarginDerivs {
    double value;
    double d1;  // dphi/dm
    double d2;  // d2phi/dm2
};

MarginDerivs margin_derivs(const ModelSpec& spec, double m) {
    switch (spec.family) {
        case Family::binary_logistic: {
            const double sp = sigmoid(m);
            const double sn = sigmoid(-m);
            return {softplus(-m), -sn, sp * sn};
        }
        case Family::smooth_hinge: {
            const double t = spec.temperature;
            const double u = (1.0 - m) / t;
            const double su = sigmoid(u);
            return {t * softplus(u), -su, su * sigmoid(-u) / t};
        }
        case Family::hinge: return {std::max(0.0, 1.0 - m), 0.0, 0.0};
        default: break;
    }
    return {0.0, 0.0, 0.0};
}

bool is_margin_family(Family f) {
    return f == Family::binary_logistic || f == Family::smooth_hinge || f == Family::hinge;
}

std::size_t class_index(double y, int k) {
    if (k == 2 && y == -1.0) return 0;
    return static_cast<std::size_t>(y);
}

// Softmax over theta (k x d row-major) . x.
Vector softmax_probs(std::span<const double> theta, std::span<const double> x, int k) {
    Vector logits(static_cast<std::size_t>(k));
    simd::gemv(theta, static_cast<std::size_t>(k), x.size(), x, logits);
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& a : logits) {
        a = std::exp(a - top);
        total += a;
    }
    for (double& a : logits) a /= total;
    return logits;
}

double multinomial_base_loss(std::span<const double> theta, ExampleRef z, int k) {
    Vector logits(static_cast<std::size_t>(k));
    simd::gemv(theta, static_cast<std::size_t>(k), z.x.size(), z.x, logits);
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double a : logits) total += std::exp(a - top);
    return top + std::log(total) - logits[class_index(z.y, k)];
}

double half_sq_norm(std::span<const double> theta) { return 0.5 * simd::dot(theta, theta); }

double base_loss(const ModelSpec& spec, std::span<const double> theta, ExampleRef z) {
    if (is_margin_family(spec.family)) {
        return margin_derivs(spec, z.y * simd::dot(theta, z.x)).value;
    }
    if (spec.family == Family::ridge) {
        const double r = simd::dot(theta, z.x) - z.y;
        return 0.5 * r * r;
    }
    return multinomial_base_loss(theta, z, spec.n_classes);
}

std::span<const double> block(std::span<const double> v, std::size_t c, std::size_t d) {
    return v.subspan(c * d, d);
}
std::span<double> block(std::span<double> v, std::size_t c, std::size_t d) {
    return v.subspan(c * d, d);
}

}  // namespace

double loss(const ModelSpec& spec, std::span<const double> theta, ExampleRef z) {
    check_dims(spec, theta, z);
    return base_loss(spec, theta, z) + spec.l2 * half_sq_norm(theta);
}

void grad_theta_into(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                     std::span<double> out) {
    if (!spec.differentiable()) hinge_unsupported();
    check_dims(spec, theta, z);
    std::transform(theta.begin(), theta.end(), out.begin(), [&](double t) { return spec.l2 * t; });
    if (is_margin_family(spec.family)) {
        const auto md = margin_derivs(spec, z.y * simd::dot(theta, z.x));
        simd::axpy(md.d1 * z.y, z.x, out);
        return;
    }
    if (spec.family == Family::ridge) {
        simd::axpy(simd::dot(theta, z.x) - z.y, z.x, out);
        return;
    }
    const int k = spec.n_classes;
    const std::size_t d = z.x.size();
    const Vector p = softmax_probs(theta, z.x, k);
    const std::size_t label = class_index(z.y, k);
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
        simd::axpy(p[c] - (c == label ? 1.0 : 0.0), z.x, block(out, c, d));
    }
}

Vector grad_theta(const ModelSpec& spec, std::span<const double> theta, ExampleRef z) {
    Vector out(theta.size());
    grad_theta_into(spec, theta, z, out);
    return out;
}

void hvp_accumulate(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                    std::span<const double> v, double weight, std::span<double> out) {
    if (!spec.differentiable()) hinge_unsupported();
    check_dims(spec, theta, z);
    simd::axpy(weight * spec.l2, v, out);
    if (is_margin_family(spec.family)) {
        const auto md = margin_derivs(spec, z.y * simd::dot(theta, z.x));
        simd::axpy(weight * md.d2 * simd::dot(z.x, v), z.x, out);
        return;
    }
    if (spec.family == Family::ridge) {
        simd::axpy(weight * simd::dot(z.x, v), z.x, out);
        return;
    }
    const int k = spec.n_classes;
    const std::size_t d = z.x.size();
    const Vector p = softmax_probs(theta, z.x, k);
    Vector a(static_cast<std::size_t>(k));
    simd::gemv(v, static_cast<std::size_t>(k), d, z.x, a);
    double abar = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) abar += p[c] * a[c];
    for (std::size_t c = 0; c < a.size(); ++c) {
        simd::axpy(weight * p[c] * (a[c] - abar), z.x, block(out, c, d));
    }
}

Vector hvp(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
           std::span<const double> v) {
    Vector out(theta.size(), 0.0);
    hvp_accumulate(spec, theta, z, v, 1.0, out);
    return out;
}

Vector grad_x_grad_theta_left(const ModelSpec& spec, std::span<const double> theta, ExampleRef z,
                              std::span<const double> s) {
    if (!spec.differentiable()) hinge_unsupported();
    check_dims(spec, theta, z);
    if (s.size() != theta.size()) throw DataError("contraction vector has wrong length");
    const std::size_t d = z.x.size();
    Vector out(d, 0.0);
    if (is_margin_family(spec.family)) {
        const auto md = margin_derivs(spec, z.y * simd::dot(theta, z.x));
        // d/dx [phi'(m) y x] = phi''(m) x theta^T + phi'(m) y I, using y^2 = 1.
        simd::axpy(md.d2 * simd::dot(s, z.x), theta, out);
        simd::axpy(md.d1 * z.y, s, out);
        return out;
    }
    if (spec.family == Family::ridge) {
        simd::axpy(simd::dot(s, z.x), theta, out);
        simd::axpy(simd::dot(theta, z.x) - z.y, s, out);
        return out;
    }
    const auto k = static_cast<std::size_t>(spec.n_classes);
    const Vector p = softmax_probs(theta, z.x, spec.n_classes);
    const std::size_t label = class_index(z.y, spec.n_classes);
    Vector sx(k);
    simd::gemv(s, k, d, z.x, sx);
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += sx[c] * p[c];
    for (std::size_t c = 0; c < k; ++c) {
        simd::axpy(p[c] * (sx[c] - total), block(theta, c, d), out);
        simd::axpy(p[c] - (c == label ? 1.0 : 0.0), block(s, c, d), out);
    }
    return out;
}

double predict(const ModelSpec& spec, std::span<const double> theta, std::span<const double> x) {
    if (theta.size() != spec.n_params(x.size())) throw DataError("parameter length mismatch");
    if (is_margin_family(spec.family)) return simd::dot(theta, x) >= 0.0 ? 1.0 : -1.0;
    if (spec.family == Family::ridge) return simd::dot(theta, x);
    const Vector p = softmax_probs(theta, x, spec.n_classes);
    const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    if (spec.n_classes == 2) return best == 0 ? -1.0 : 1.0;
    return static_cast<double>(best);
}

namespace {

void check_weights(const Dataset& data, std::span<const double> weights) {
    if (data.size() == 0) throw DataError("empty dataset");
    if (!weights.empty() && weights.size() != data.size()) {
        throw DataError("weight vector length does not match dataset size");
    }
}

double weight_at(std::span<const double> weights, std::size_t i) {
    return weights.empty() ? 1.0 : weights[i];
}

double weight_mean(const Dataset& data, std::span<const double> weights) {
    if (weights.empty()) return 1.0;
    double total = 0.0;
    for (double w : weights) total += w;
    return total / static_cast<double>(data.size());
}

void check_theta(const ModelSpec& spec, std::span<const double> theta, const Dataset& data) {
    if (theta.size() != spec.n_params(data.dim())) {
        throw DataError("parameter length " + std::to_string(theta.size()) +
                        " does not match model dimension " + std::to_string(spec.n_params(data.dim())));
    }
}

}  // namespace

double empirical_risk(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> weights) {
    check_weights(data, weights);
    check_theta(spec, theta, data);
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double w = weight_at(weights, i);
        if (w != 0.0) total += w * base_loss(spec, theta, data[i]);
    }
    return total / static_cast<double>(data.size()) +
           weight_mean(data, weights) * spec.l2 * half_sq_norm(theta);
}

Vector empirical_grad(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                      std::span<const double> weights) {
    if (!spec.differentiable()) hinge_unsupported();
    check_weights(data, weights);
    check_theta(spec, theta, data);
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector out(theta.begin(), theta.end());
    simd::scale(spec.l2 * weight_mean(data, weights), out);

    if (spec.family == Family::multinomial_logistic) {
        for (std::size_t i = 0; i < n; ++i) {
            const double w = weight_at(weights, i);
            if (w == 0.0) continue;
            const auto z = data[i];
            const Vector p = softmax_probs(theta, z.x, spec.n_classes);
            const std::size_t label = class_index(z.y, spec.n_classes);
            for (std::size_t c = 0; c < p.size(); ++c) {
                simd::axpy(w * inv_n * (p[c] - (c == label ? 1.0 : 0.0)), z.x, block(std::span<double>(out), c, d));
            }
        }
        return out;
    }

    Vector coef(n);
    simd::gemv(data.features(), n, d, theta, coef);
    const auto labels = data.labels();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weight_at(weights, i) * inv_n;
        if (spec.family == Family::ridge) {
            coef[i] = w * (coef[i] - labels[i]);
        } else {
            coef[i] = w * margin_derivs(spec, labels[i] * coef[i]).d1 * labels[i];
        }
    }
    simd::gemv_t(data.features(), n, d, coef, out);
    return out;
}

Vector empirical_hvp(const ModelSpec& spec, std::span<const double> theta, const Dataset& data,
                     std::span<const double> v, std::span<const double> weights) {
    return EmpiricalHessian(spec, theta, data, weights).apply(v);
}

EmpiricalHessian::EmpiricalHessian(const ModelSpec& spec, std::span<const double> theta,
                                   const Dataset& data, std::span<const double> weights)
    : spec_(spec), data_(&data), n_params_(theta.size()) {
    if (!spec.differentiable()) hinge_unsupported();
    check_weights(data, weights);
    check_theta(spec, theta, data);
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    ridge_weight_ = spec.l2 * weight_mean(data, weights);

    if (spec.family == Family::multinomial_logistic) {
        const auto k = static_cast<std::size_t>(spec.n_classes);
        probs_.resize(n * k);
        weights_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            weights_[i] = weight_at(weights, i) * inv_n;
            const Vector p = softmax_probs(theta, data.row(i), spec.n_classes);
            std::copy(p.begin(), p.end(), probs_.begin() + static_cast<std::ptrdiff_t>(i * k));
        }
        return;
    }
    curvature_.resize(n);
    simd::gemv(data.features(), n, d, theta, curvature_);
    const auto labels = data.labels();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weight_at(weights, i) * inv_n;
        if (spec.family == Family::ridge) {
            curvature_[i] = w;
        } else {
            curvature_[i] = w * margin_derivs(spec, labels[i] * curvature_[i]).d2;
        }
    }
}

void EmpiricalHessian::apply(std::span<const double> v, std::span<double> out) const {
    if (v.size() != n_params_ || out.size() != n_params_) throw DataError("HVP dimension mismatch");
    const Dataset& data = *data_;
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    std::copy(v.begin(), v.end(), out.begin());
    simd::scale(ridge_weight_, out);

    if (spec_.family == Family::multinomial_logistic) {
        const auto k = static_cast<std::size_t>(spec_.n_classes);
        Vector a(k);
        for (std::size_t i = 0; i < n; ++i) {
            if (weights_[i] == 0.0) continue;
            const auto x = data.row(i);
            const double* p = probs_.data() + i * k;
            simd::gemv(v, k, d, x, a);
            double abar = 0.0;
            for (std::size_t c = 0; c < k; ++c) abar += p[c] * a[c];
            for (std::size_t c = 0; c < k; ++c) {
                simd::axpy(weights_[i] * p[c] * (a[c] - abar), x, block(out, c, d));
            }
        }
        return;
    }
    Vector u(n);
    simd::gemv(data.features(), n, d, v, u);
    for (std::size_t i = 0; i < n; ++i) u[i] *= curvature_[i];
    simd::gemv_t(data.features(), n, d, u, out);
}

Vector EmpiricalHessian::apply(std::span<const double> v) const {
    Vector out(n_params_);
    apply(v, out);
    return out;
}

Vector EmpiricalHessian::dense() const {
    const std::size_t p = n_params_;
    Vector h(p * p, 0.0);
    if (spec_.family == Family::multinomial_logistic) {
        Vector e(p, 0.0);
        Vector col(p);
        for (std::size_t j = 0; j < p; ++j) {
            e[j] = 1.0;
            apply(e, col);
            e[j] = 0.0;
            for (std::size_t i = 0; i < p; ++i) h[i * p + j] = col[i];
        }
        // Symmetrize away rounding differences between the two triangles.
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                const double avg = 0.5 * (h[i * p + j] + h[j * p + i]);
                h[i * p + j] = avg;
                h[j * p + i] = avg;
            }
        }
        return h;
    }
    const Dataset& data = *data_;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double c = curvature_[i];
        if (c == 0.0) continue;
        const auto x = data.row(i);
        for (std::size_t r = 0; r < p; ++r) {
            if (x[r] != 0.0) simd::axpy(c * x[r], x, std::span<double>(h).subspan(r * p, p));
        }
    }
    for (std::size_t r = 0; r < p; ++r) h[r * p + r] += ridge_weight_;
    return h;
}

}  // namespace influence
