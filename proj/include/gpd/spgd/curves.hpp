#pragma once

#include <array>
#include <string>
#include <vector>

#include "gpd/microgen/container.hpp"
#include "gpd/spgd/spgd.hpp"

namespace gpd::spgd {

inline constexpr std::size_t kCurvePoints = 1000;

enum class Which { m1, m2 };

/// Affine map of [lo, hi] onto [-1, 1].
struct AffineMap {
    double lo = -1.0;
    double hi = 1.0;

    double forward(double v) const { return 2.0 * (v - lo) / (hi - lo) - 1.0; }
    double inverse(double u) const { return lo + (u + 1.0) * 0.5 * (hi - lo); }

    /// Covers [min, max] of the values; degenerate spans are widened by 1.
    static AffineMap covering(double min, double max);

    bool operator==(const AffineMap&) const = default;
};

/// One map per mode index, shared by every sample in the dataset.
struct GlobalNormalization {
    std::array<AffineMap, kModes> m1;
    std::array<AffineMap, kModes> m2;
    std::array<AffineMap, kModes> field;

    bool operator==(const GlobalNormalization&) const = default;
};

/// Raw M values at 1000 uniform points over the mode's range.
std::vector<double> raw_curve(const SeparatedSolution& sol, std::size_t mode, Which which);

/// raw_curve mapped by the global map for that mode index.
std::vector<double> curve_samples(const SeparatedSolution& sol, std::size_t mode, Which which,
                                  const GlobalNormalization& norm);

std::vector<double> denormalize(const std::vector<double>& values, const AffineMap& map);
std::vector<double> normalize_values(const std::vector<double>& values, const AffineMap& map);

GlobalNormalization fit_normalization(const std::vector<SeparatedSolution>& solutions);

/// Least-squares lambda whose curve best matches `raw` (1000 samples).
std::vector<double> curve_to_lambda(const ParametricBasis& basis, const std::vector<double>& raw, double ridge = 1e-8);

/// Stacks solutions as arrays "<prefix>.f" (N x 3 x X), "<prefix>.lambda1",
/// "<prefix>.lambda2" (N x 3 x D_s) plus basis descriptors in the manifest.
void put_solutions(microgen::DatasetContainer& c, const std::string& prefix,
                   const std::vector<SeparatedSolution>& solutions);
std::vector<SeparatedSolution> get_solutions(const microgen::DatasetContainer& c, const std::string& prefix);

nlohmann::json to_json(const ParametricBasis& b);
ParametricBasis basis_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GlobalNormalization& n);
GlobalNormalization normalization_from_json(const nlohmann::json& j);

}  // namespace gpd::spgd
