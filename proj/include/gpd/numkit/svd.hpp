#pragma once

#include <cstddef>
#include <vector>

#include "gpd/numkit/matrix.hpp"

namespace gpd::numkit {

/// Thin singular value decomposition m = U diag(S) V^T with
/// k = min(rows, cols) components.
struct SvdResult {
    Matrix u;                // rows x k, orthonormal columns
    std::vector<double> s;   // k values, descending, nonnegative
    Matrix v;                // cols x k, orthonormal columns
};

/// One-sided (Hestenes) Jacobi SVD. Columns are sign-normalized so the
/// largest-magnitude entry of every U column is positive. Throws
/// NumericalError if the sweeps do not converge.
SvdResult thin_svd(const Matrix& m);

struct Truncation {
    Matrix u_k;  // rows x k_max
    Matrix a;    // k_max x cols, equal to diag(S_k) V_k^T
};

/// Keep the leading k_max components of an SVD.
Truncation truncate(const SvdResult& svd, std::size_t k_max);

}  // namespace gpd::numkit
