#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "gpd/microgen/inclusion.hpp"

namespace gpd::oracle {

/// Young's moduli in MPa: mu1 for the matrix, mu2 for the inclusion.
struct MaterialPoint {
    double mu1 = 800.0;
    double mu2 = 12000.0;

    bool operator==(const MaterialPoint&) const = default;
};

struct MaterialRanges {
    double mu1_min = 800.0;
    double mu1_max = 2400.0;
    double mu2_min = 12000.0;
    double mu2_max = 68000.0;

    bool contains(const MaterialPoint& mu) const;
    /// DomainError naming the offending modulus.
    void check(const MaterialPoint& mu) const;
};

struct OracleConfig {
    double applied_strain = 0.08;
    double boundary_length = 5.0;  // pixels
    double amplitude = 0.8;
    double nonseparable_weight = 0.0;
    double poisson_matrix = 0.3;
    double poisson_inclusion = 0.2;

    void validate() const;
};

/// Distance in pixels from each pixel center to the phase boundary, negative
/// inside the inclusion. A pixel adjacent to the other phase sits at |d| = 0.5.
std::vector<double> signed_distance(const microgen::RVEImage& img);

/// Squared Euclidean distance transform (Felzenszwalb-Huttenlocher) of a
/// row-major n x n grid: distance to the nearest pixel with `target[i]`.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& target, std::size_t n);

/// Field from precomputed signed distances; only requires positive moduli.
std::vector<double> stress_field(const std::vector<double>& signed_dist, const MaterialPoint& mu,
                                 const OracleConfig& cfg = {});

/// Range-checked entry point.
std::vector<double> stress_field(const microgen::RVEImage& img, const MaterialPoint& mu, const OracleConfig& cfg = {},
                                 const MaterialRanges& ranges = {});

inline constexpr std::size_t kGridMu2 = 8;
inline constexpr std::size_t kGridMu1 = 5;

/// Regular lattice, point index = i * 5 + j with i along mu2 and j along mu1.
struct CollocationGrid {
    MaterialRanges ranges;
    std::vector<MaterialPoint> points;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;

    std::vector<double> mu1_values() const;  // 5 lattice values
    std::vector<double> mu2_values() const;  // 8 lattice values
};

inline constexpr std::array<std::array<std::size_t, 2>, 8> kTestLattice = {
    {{1, 1}, {2, 3}, {3, 2}, {4, 1}, {5, 3}, {6, 2}, {1, 3}, {6, 1}}};

CollocationGrid collocation_grid(const MaterialRanges& ranges = {});

}  // namespace gpd::oracle
