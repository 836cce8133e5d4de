#include "gpd/numkit/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "gpd/errors.hpp"

namespace gpd::numkit {
namespace {

constexpr int kMaxSweeps = 80;
constexpr double kOrthTol = 1e-15;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Jacobi on a tall matrix stored as columns (rows >= cols).
SvdResult jacobi_tall(const Matrix& m) {
    const std::size_t rows = m.rows();
    const std::size_t n = m.cols();

    std::vector<std::vector<double>> a(n, std::vector<double>(rows));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) a[j][i] = m(i, j);
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

    bool converged = (n < 2);
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = dot(a[p], a[p]);
                const double beta = dot(a[q], a[q]);
                const double gamma = dot(a[p], a[q]);
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kOrthTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double ap = a[p][i];
                    const double aq = a[q][i];
                    a[p][i] = c * ap - s * aq;
                    a[q][i] = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v[p][i];
                    const double vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericalError("thin_svd: Jacobi sweeps did not converge after " + std::to_string(kMaxSweeps) +
                             " sweeps (" + std::to_string(rows) + "x" + std::to_string(n) + ")");
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(a[j], a[j]));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    SvdResult out{Matrix(rows, n), std::vector<double>(n), Matrix(n, n)};
    std::vector<std::vector<double>> ucols;
    ucols.reserve(n);
    std::vector<std::size_t> missing;
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = order[r];
        out.s[r] = sigma[j];
        std::vector<double> u = a[j];
        if (sigma[j] > 0.0 && std::isfinite(sigma[j])) {
            for (double& x : u) x /= sigma[j];
        } else {
            out.s[r] = 0.0;
            missing.push_back(r);
        }
        ucols.push_back(std::move(u));
        for (std::size_t i = 0; i < n; ++i) out.v(i, r) = v[j][i];
    }

    // Exactly zero columns carry no direction: complete them to an
    // orthonormal set with twice-applied Gram-Schmidt on canonical vectors.
    std::size_t probe = 0;
    for (std::size_t r : missing) {
        for (; probe < rows; ++probe) {
            std::vector<double> cand(rows, 0.0);
            cand[probe] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < n; ++o) {
                    if (o == r) continue;
                    if (std::find(missing.begin(), missing.end(), o) != missing.end() && o > r) continue;
                    const double d = dot(cand, ucols[o]);
                    for (std::size_t i = 0; i < rows; ++i) cand[i] -= d * ucols[o][i];
                }
            }
            const double nrm = std::sqrt(dot(cand, cand));
            if (nrm > 0.5) {
                for (double& x : cand) x /= nrm;
                ucols[r] = std::move(cand);
                ++probe;
                break;
            }
        }
    }

    for (std::size_t r = 0; r < n; ++r) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < rows; ++i)
            if (std::abs(ucols[r][i]) > std::abs(ucols[r][arg])) arg = i;
        const double sign = ucols[r][arg] < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < rows; ++i) out.u(i, r) = sign * ucols[r][i];
        for (std::size_t i = 0; i < n; ++i) out.v(i, r) *= sign;
    }
    return out;
}

}  // namespace

SvdResult thin_svd(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw ArgumentError("thin_svd: empty matrix");
    if (!m.all_finite()) throw ArgumentError("thin_svd: matrix has non-finite entries");
    if (m.rows() >= m.cols()) return jacobi_tall(m);

    // Wide input: decompose the transpose, then swap factors and reapply the
    // sign convention to the new U.
    SvdResult t = jacobi_tall(m.transpose());
    SvdResult out{std::move(t.v), std::move(t.s), std::move(t.u)};
    for (std::size_t r = 0; r < out.s.size(); ++r) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < out.u.rows(); ++i)
            if (std::abs(out.u(i, r)) > std::abs(out.u(arg, r))) arg = i;
        if (out.u(arg, r) < 0.0) {
            for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, r) = -out.u(i, r);
            for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, r) = -out.v(i, r);
        }
    }
    return out;
}

Truncation truncate(const SvdResult& svd, std::size_t k_max) {
    const std::size_t k = svd.s.size();
    if (k_max < 1 || k_max > k) {
        throw ArgumentError("truncate: k_max=" + std::to_string(k_max) + " outside [1, " + std::to_string(k) + "]");
    }
    Truncation out{svd.u.block_columns(0, k_max), Matrix(k_max, svd.v.rows())};
    for (std::size_t r = 0; r < k_max; ++r)
        for (std::size_t j = 0; j < svd.v.rows(); ++j) out.a(r, j) = svd.s[r] * svd.v(j, r);
    return out;
}

}  // namespace gpd::numkit
