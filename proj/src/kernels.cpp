#include "influence/kernels.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace influence::simd {

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(INFLUENCE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable* kernels_for(Isa isa) {
    if (!cpu_supports(isa)) return nullptr;
    switch (isa) {
        case Isa::scalar: return &scalar_kernels();
        case Isa::avx2:
#if defined(INFLUENCE_HAVE_AVX2)
            return &detail::avx2_table();
#else
            return nullptr;
#endif
    }
    return nullptr;
}

namespace {

const KernelTable& select() {
    const char* forced = std::getenv("INFLUENCE_KIT_SIMD");
    if (forced != nullptr) {
        const std::string name{forced};
        if (name == "scalar") return scalar_kernels();
        if (name == "avx2") {
            if (const auto* t = kernels_for(Isa::avx2)) return *t;
        }
    }
    if (const auto* t = kernels_for(Isa::avx2)) return *t;
    return scalar_kernels();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) { active().scale(alpha, x.data(), x.size()); }

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void gemv(std::span<const double> matrix, std::size_t rows, std::size_t cols,
          std::span<const double> v, std::span<double> out) {
    assert(matrix.size() == rows * cols && v.size() == cols && out.size() == rows);
    active().gemv(matrix.data(), rows, cols, v.data(), out.data());
}

void gemv_t(std::span<const double> matrix, std::size_t rows, std::size_t cols,
            std::span<const double> weights, std::span<double> out) {
    assert(matrix.size() == rows * cols && weights.size() == rows && out.size() == cols);
    active().gemv_t(matrix.data(), rows, cols, weights.data(), out.data());
}

}  // namespace influence::simd
