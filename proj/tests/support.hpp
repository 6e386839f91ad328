#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "influence/dataset.hpp"
#include "influence/models.hpp"

namespace testing {

using influence::Dataset;
using influence::Task;
using influence::Vector;

inline double rel_err(std::span<const double> a, std::span<const double> b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline Vector normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Vector v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

/// Gaussian features with labels from a noisy linear rule.
inline Dataset random_binary(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Vector w = normal_vector(rng, d);
    Vector x = normal_vector(rng, n * d);
    std::normal_distribution<double> noise(0.0, 1.0);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = noise(rng);
        for (std::size_t j = 0; j < d; ++j) s += w[j] * x[i * d + j];
        y[i] = s >= 0.0 ? 1.0 : -1.0;
    }
    return Dataset(d, Task::binary, 2, std::move(x), std::move(y));
}

inline Dataset random_regression(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Vector w = normal_vector(rng, d);
    Vector x = normal_vector(rng, n * d);
    std::normal_distribution<double> noise(0.0, 0.1);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = noise(rng);
        for (std::size_t j = 0; j < d; ++j) s += w[j] * x[i * d + j];
        y[i] = s;
    }
    return Dataset(d, Task::regression, 0, std::move(x), std::move(y));
}

inline Dataset random_multiclass(std::size_t n, std::size_t d, int k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Vector x = normal_vector(rng, n * d);
    std::uniform_int_distribution<int> cls(0, k - 1);
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = cls(rng);
        x[i * d + static_cast<std::size_t>(y[i]) % d] += 1.5;
    }
    return Dataset(d, Task::multiclass, k, std::move(x), std::move(y));
}

/// Copy of data with row `src` appended again at the end.
inline Dataset with_duplicate(const Dataset& data, std::size_t src) {
    Vector x(data.features().begin(), data.features().end());
    Vector y(data.labels().begin(), data.labels().end());
    const auto row = data.row(src);
    x.insert(x.end(), row.begin(), row.end());
    y.push_back(data.labels()[src]);
    return Dataset(data.dim(), data.task(), data.n_classes(), std::move(x), std::move(y));
}

/// Copy of data with an all-zero feature row appended.
inline Dataset with_zero_row(const Dataset& data, double label) {
    Vector x(data.features().begin(), data.features().end());
    Vector y(data.labels().begin(), data.labels().end());
    x.resize(x.size() + data.dim(), 0.0);
    y.push_back(label);
    return Dataset(data.dim(), data.task(), data.n_classes(), std::move(x), std::move(y));
}

}  // namespace testing
