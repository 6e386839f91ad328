#pragma once

// Dense double-precision inner loops used by the loss, Hessian and solver
// code. Every routine has a portable scalar reference implementation and, on
// x86-64, an AVX2+FMA variant. The variant is chosen once at runtime from the
// CPU feature bits; INFLUENCE_KIT_SIMD=scalar|avx2 overrides the choice.

#include <cstddef>
#include <span>
#include <string_view>

namespace influence::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Raw kernel table. All pointers are non-null for an available ISA.
struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // out[i] = row_i(X) . v for a row-major n x d matrix
    void (*gemv)(const double* x, std::size_t rows, std::size_t cols, const double* v,
                 double* out);
    // out += sum_i w[i] * row_i(X)
    void (*gemv_t)(const double* x, std::size_t rows, std::size_t cols, const double* w,
                   double* out);
};

const KernelTable& scalar_kernels();

/// Returns nullptr when the ISA was not compiled in or the CPU lacks it.
const KernelTable* kernels_for(Isa isa);

/// The table selected for this process.
const KernelTable& active();

bool cpu_supports(Isa isa);

// Span front ends over active(). Sizes are checked by the callers that own the
// shapes; these only assert in debug builds.

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
double norm2(std::span<const double> x);
void gemv(std::span<const double> matrix, std::size_t rows, std::size_t cols,
          std::span<const double> v, std::span<double> out);
void gemv_t(std::span<const double> matrix, std::size_t rows, std::size_t cols,
            std::span<const double> weights, std::span<double> out);

}  // namespace influence::simd
