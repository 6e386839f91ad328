#include "influence/kernels.hpp"

namespace influence::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void gemv_scalar(const double* x, std::size_t rows, std::size_t cols, const double* v,
                 double* out) {
    for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(x + r * cols, v, cols);
}

void gemv_t_scalar(const double* x, std::size_t rows, std::size_t cols, const double* w,
                   double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (w[r] != 0.0) axpy_scalar(w[r], x + r * cols, out, cols);
    }
}

}  // namespace

const KernelTable& scalar_kernels() {
    static const KernelTable table{Isa::scalar, dot_scalar,  axpy_scalar,
                                   scale_scalar, gemv_scalar, gemv_t_scalar};
    return table;
}

}  // namespace influence::simd
