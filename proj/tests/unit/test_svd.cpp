#include <cmath>

#include "doctest.h"
#include "gpd/errors.hpp"
#include "gpd/numkit/svd.hpp"
#include "gpd/rng.hpp"

using gpd::numkit::Matrix;
using gpd::numkit::thin_svd;
using gpd::numkit::truncate;

namespace {

Matrix random_matrix(gpd::Rng& rng, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

double orthonormality_error(const Matrix& q) {
    const Matrix g = q.transpose() * q;
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

Matrix reconstruct(const gpd::numkit::SvdResult& s) {
    return s.u * Matrix::diagonal(s.s) * s.v.transpose();
}

}  // namespace

TEST_CASE("thin_svd of diag(3,1)") {
    Matrix m(2, 2);
    m(0, 0) = 3.0;
    m(1, 1) = 1.0;
    const auto s = thin_svd(m);
    REQUIRE(s.s.size() == 2);
    CHECK(s.s[0] == doctest::Approx(3.0));
    CHECK(s.s[1] == doctest::Approx(1.0));
    // sign convention makes the largest entry of each U column positive
    CHECK(s.u(0, 0) == doctest::Approx(1.0));
    CHECK(s.u(1, 1) == doctest::Approx(1.0));
    CHECK(std::abs(s.v(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(s.v(1, 1)) == doctest::Approx(1.0));
}

TEST_CASE("thin_svd of the 4x4 identity") {
    const auto s = thin_svd(Matrix::identity(4));
    for (double v : s.s) CHECK(v == doctest::Approx(1.0));
    CHECK(orthonormality_error(s.u) < 1e-12);
}

TEST_CASE("thin_svd of an outer product has one nonzero singular value") {
    gpd::Rng rng(7);
    std::vector<double> a(5), b(4);
    for (double& x : a) x = rng.normal();
    for (double& x : b) x = rng.normal();
    Matrix m(5, 4);
    double na = 0, nb = 0;
    for (std::size_t i = 0; i < 5; ++i) na += a[i] * a[i];
    for (std::size_t j = 0; j < 4; ++j) nb += b[j] * b[j];
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) m(i, j) = a[i] * b[j];
    const auto s = thin_svd(m);
    CHECK(s.s[0] == doctest::Approx(std::sqrt(na) * std::sqrt(nb)).epsilon(1e-12));
    for (std::size_t r = 1; r < 4; ++r) CHECK(s.s[r] < 1e-12 * s.s[0]);
    CHECK(orthonormality_error(s.u) < 1e-10);
    CHECK(orthonormality_error(s.v) < 1e-10);
}

TEST_CASE("thin_svd rejects empty and non-finite input") {
    CHECK_THROWS_AS(thin_svd(Matrix()), gpd::ArgumentError);
    Matrix m(2, 2, 1.0);
    m(1, 1) = std::nan("");
    CHECK_THROWS_AS(thin_svd(m), gpd::ArgumentError);
}

TEST_CASE("thin_svd handles exactly zero columns") {
    Matrix m(4, 3);
    m(0, 0) = 2.0;
    const auto s = thin_svd(m);
    CHECK(s.s[0] == doctest::Approx(2.0));
    CHECK(s.s[1] == 0.0);
    CHECK(orthonormality_error(s.u) < 1e-12);
    CHECK(orthonormality_error(s.v) < 1e-12);
    CHECK((reconstruct(s) - m).frobenius_norm() < 1e-12);
}

TEST_CASE("truncate keeps the best rank-k approximation") {
    SUBCASE("rank-2 input is recovered with k_max = 2") {
        gpd::Rng rng(11);
        Matrix m(6, 5);
        for (int term = 0; term < 2; ++term) {
            std::vector<double> a(6), b(5);
            for (double& x : a) x = rng.normal();
            for (double& x : b) x = rng.normal();
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t j = 0; j < 5; ++j) m(i, j) += a[i] * b[j];
        }
        const auto t = truncate(thin_svd(m), 2);
        CHECK(t.u_k.cols() == 2);
        CHECK(t.a.rows() == 2);
        CHECK(t.a.cols() == 5);
        CHECK((m - t.u_k * t.a).frobenius_norm() / m.frobenius_norm() < 1e-10);
    }
    SUBCASE("full rank reproduces the input") {
        gpd::Rng rng(12);
        const Matrix m = random_matrix(rng, 7, 4);
        const auto t = truncate(thin_svd(m), 4);
        CHECK((m - t.u_k * t.a).frobenius_norm() / m.frobenius_norm() < 1e-12);
    }
    SUBCASE("diag(3,1) with k_max = 1 keeps the dominant direction") {
        Matrix m(2, 2);
        m(0, 0) = 3.0;
        m(1, 1) = 1.0;
        const auto t = truncate(thin_svd(m), 1);
        const Matrix r = t.u_k * t.a;
        CHECK(r(0, 0) == doctest::Approx(3.0));
        CHECK(std::abs(r(0, 1)) < 1e-15);
        CHECK(std::abs(r(1, 0)) < 1e-15);
        CHECK(std::abs(r(1, 1)) < 1e-15);
    }
    SUBCASE("k_max out of range") {
        const auto s = thin_svd(Matrix::identity(3));
        CHECK_THROWS_AS(truncate(s, 0), gpd::ArgumentError);
        CHECK_THROWS_AS(truncate(s, 4), gpd::ArgumentError);
    }
}

TEST_CASE("property: orthonormal factors, descending values, exact reconstruction") {
    gpd::Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t r = 1 + rng.index(64);
        const std::size_t c = 1 + rng.index(48);
        const Matrix m = random_matrix(rng, r, c);
        const auto s = thin_svd(m);
        const std::size_t k = std::min(r, c);
        REQUIRE(s.s.size() == k);
        for (std::size_t i = 0; i + 1 < k; ++i) REQUIRE(s.s[i] >= s.s[i + 1]);
        REQUIRE(s.s.back() >= 0.0);
        REQUIRE(orthonormality_error(s.u) < 1e-9);
        REQUIRE(orthonormality_error(s.v) < 1e-9);
        REQUIRE((reconstruct(s) - m).frobenius_norm() / m.frobenius_norm() < 1e-9);
    }
}

TEST_CASE("property: truncation error equals the discarded singular-value energy") {
    gpd::Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t r = 2 + rng.index(63);
        const std::size_t c = 2 + rng.index(47);
        const Matrix m = random_matrix(rng, r, c);
        const auto s = thin_svd(m);
        const std::size_t k = 1 + rng.index(std::min(r, c) - 1);
        const auto t = truncate(s, k);
        double tail = 0.0;
        for (std::size_t i = k; i < s.s.size(); ++i) tail += s.s[i] * s.s[i];
        const double err = (m - t.u_k * t.a).frobenius_norm();
        REQUIRE(err == doctest::Approx(std::sqrt(tail)).epsilon(1e-8));
    }
}
