#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "gpd/oracle/oracle.hpp"

namespace gpd::spgd {

enum class BasisKind { gaussian_kriging, piecewise_linear };

const char* to_string(BasisKind k);
BasisKind basis_kind_from_string(const std::string& s);

/// One-dimensional shape functions over [lo, hi] with `size` equally spaced
/// centers, endpoints included.
struct ParametricBasis {
    BasisKind kind = BasisKind::gaussian_kriging;
    double lo = 0.0;
    double hi = 1.0;
    std::size_t size = 8;
    double correlation_length = 0.0;  // 0 selects 1.5 x center spacing

    static ParametricBasis make(BasisKind kind, double lo, double hi, std::size_t size = 8);

    std::vector<double> centers() const;
    double spacing() const { return (hi - lo) / static_cast<double>(size - 1); }
    double effective_correlation_length() const;
    void validate() const;

    bool operator==(const ParametricBasis&) const = default;
};

/// DomainError outside [lo, hi].
std::vector<double> basis_eval(const ParametricBasis& basis, double mu);

/// M(mu) = basis_eval(mu) . lambda.
double mode_value(const ParametricBasis& basis, const std::vector<double>& lambda, double mu);

struct SpgdMode {
    std::vector<double> f;        // spatial field, resolution^2 values
    std::vector<double> lambda1;  // coefficients of M1
    std::vector<double> lambda2;  // coefficients of M2

    bool is_zero() const;
};

inline constexpr std::size_t kModes = 3;

struct ModeDiagnostics {
    std::vector<double> rms_history;  // train RMS residual after every alternating step
    std::size_t sweeps = 0;
    std::size_t restarts = 0;
    bool accepted = false;
};

struct SeparatedSolution {
    std::array<SpgdMode, kModes> modes;
    ParametricBasis basis1;  // over mu1
    ParametricBasis basis2;  // over mu2
    std::size_t field_size = 0;
    std::vector<ModeDiagnostics> diagnostics;
    std::vector<double> train_rms;  // after 0, 1, ... accepted modes

    /// Rescales every mode so sup |M| over its range is 1 with a positive
    /// extremum, folding the magnitude into F.
    void normalize();
};

struct Sample {
    oracle::MaterialPoint mu;
    std::vector<double> field;
};

struct FitConfig {
    std::size_t max_modes = kModes;
    std::size_t max_sweeps = 50;
    double tolerance = 1e-8;
    double ridge = 1e-8;  // relative to trace / D_s
    BasisKind basis = BasisKind::gaussian_kriging;
    std::size_t basis_size = 8;
    oracle::MaterialRanges ranges;
};

SeparatedSolution fit_spgd(const std::vector<Sample>& samples, const FitConfig& cfg = {});

std::vector<double> evaluate(const SeparatedSolution& sol, const oracle::MaterialPoint& mu);

struct MapeResult {
    double percent = 0.0;
    std::size_t excluded = 0;  // reference pixels equal to zero
};

MapeResult mape(const std::vector<std::vector<double>>& predicted, const std::vector<std::vector<double>>& reference);
MapeResult mape(const SeparatedSolution& sol, const std::vector<Sample>& heldout);

}  // namespace gpd::spgd
