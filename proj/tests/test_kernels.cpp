#include "doctest.h"

#include <random>

#include "influence/kernels.hpp"
#include "support.hpp"

using namespace influence;

TEST_SUITE("kernels") {

TEST_CASE("scalar table is always available") {
    CHECK(simd::kernels_for(simd::Isa::scalar) != nullptr);
    CHECK(simd::scalar_kernels().isa == simd::Isa::scalar);
}

TEST_CASE("scalar reference values") {
    const auto& k = simd::scalar_kernels();
    const Vector a{1, 2, 3};
    const Vector b{4, -5, 6};
    CHECK(k.dot(a.data(), b.data(), 3) == 12.0);
    Vector y{1, 1, 1};
    k.axpy(2.0, a.data(), y.data(), 3);
    CHECK(y == Vector{3, 5, 7});
    k.scale(0.5, y.data(), 3);
    CHECK(y == Vector{1.5, 2.5, 3.5});
    // 2 x 3 row-major matrix
    const Vector m{1, 2, 3, 4, 5, 6};
    Vector out(2);
    k.gemv(m.data(), 2, 3, a.data(), out.data());
    CHECK(out == Vector{14, 32});
    Vector acc{1, 1, 1};
    const Vector w{1, -1};
    k.gemv_t(m.data(), 2, 3, w.data(), acc.data());
    CHECK(acc == Vector{-2, -2, -2});
}

TEST_CASE("avx2 matches scalar on every length and tail") {
    const simd::KernelTable* fast = simd::kernels_for(simd::Isa::avx2);
    if (fast == nullptr) {
        MESSAGE("AVX2 not available on this machine; equivalence test skipped");
        return;
    }
    const auto& ref = simd::scalar_kernels();
    std::mt19937_64 rng(1);
    for (std::size_t n = 0; n <= 67; ++n) {
        const Vector a = testing::normal_vector(rng, n);
        const Vector b = testing::normal_vector(rng, n);
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
        CHECK(std::abs(fast->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= 1e-14 * (1.0 + scale));

        Vector y1 = b;
        Vector y2 = b;
        fast->axpy(0.37, a.data(), y1.data(), n);
        ref.axpy(0.37, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));

        fast->scale(-1.3, y1.data(), n);
        ref.scale(-1.3, y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-15));
    }
    for (std::size_t rows : {1u, 3u, 8u}) {
        for (std::size_t cols : {1u, 4u, 7u, 21u}) {
            const Vector m = testing::normal_vector(rng, rows * cols);
            const Vector v = testing::normal_vector(rng, cols);
            const Vector w = testing::normal_vector(rng, rows);
            Vector o1(rows);
            Vector o2(rows);
            fast->gemv(m.data(), rows, cols, v.data(), o1.data());
            ref.gemv(m.data(), rows, cols, v.data(), o2.data());
            CHECK(testing::rel_err(o1, o2) <= 1e-14);
            Vector t1(cols, 0.5);
            Vector t2(cols, 0.5);
            fast->gemv_t(m.data(), rows, cols, w.data(), t1.data());
            ref.gemv_t(m.data(), rows, cols, w.data(), t2.data());
            CHECK(testing::rel_err(t1, t2) <= 1e-14);
        }
    }
}

TEST_CASE("span front ends use the active table") {
    const Vector a{3, 4};
    CHECK(simd::norm2(a) == doctest::Approx(5.0));
    CHECK(simd::dot(a, a) == doctest::Approx(25.0));
    CHECK(simd::isa_name(simd::active().isa).size() > 0);
}

}
