#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace gpd::microgen {

enum class ShapeKind { circle, ellipse, square, rectangle };

const char* to_string(ShapeKind k);
ShapeKind shape_from_string(const std::string& s);

inline constexpr double kMargin = 0.05;
inline constexpr double kMinHalfAxis = 0.08;
inline constexpr double kMaxHalfAxis = 0.35;

/// One inclusion in unit-square coordinates. Half axes are fractions of the
/// domain edge; orientation is in radians, [0, pi).
struct InclusionSpec {
    ShapeKind shape = ShapeKind::circle;
    double cx = 0.5;
    double cy = 0.5;
    double a = 0.2;
    double b = 0.2;
    double orientation = 0.0;

    bool operator==(const InclusionSpec&) const = default;
};

struct ClassMix {
    double circle = 0.25;
    double ellipse = 0.25;
    double square = 0.25;
    double rectangle = 0.25;
};

/// Throws ArgumentError when the spec breaks the margin, size or symmetry
/// invariants.
void validate(const InclusionSpec& spec);

/// Half extents of the rotated shape along x and y.
std::pair<double, double> half_extents(const InclusionSpec& spec);

bool contains(const InclusionSpec& spec, double x, double y);

/// Draws one inclusion: shape per `mix`, half axes uniform in the allowed
/// range, orientation uniform in [0, pi), center at (0.5, 0.5) jittered
/// uniformly by up to `center_jitter`. Geometry is redrawn (class kept) until
/// the margin holds; gives up with GenerationError after 1000 tries.
InclusionSpec sample_inclusion(std::uint64_t seed, const ClassMix& mix = {}, double center_jitter = 0.0);

/// `count` inclusions with per-sample seeds derive_seed(base_seed, i).
std::vector<InclusionSpec> sample_inclusions(std::size_t count, std::uint64_t base_seed, const ClassMix& mix = {},
                                             double center_jitter = 0.0);

/// Binary two-phase raster, row-major, row 0 at y = 0. 1 = inclusion.
struct RVEImage {
    std::size_t resolution = 0;
    std::vector<std::uint8_t> pixels;
    std::optional<InclusionSpec> spec;

    double volume_fraction() const;
};

/// Pixel (i, j) is 1 iff its center ((j + .5)/n, (i + .5)/n) lies inside the
/// shape.
RVEImage rasterize(const InclusionSpec& spec, std::size_t resolution);

void to_json(nlohmann::json& j, const InclusionSpec& s);
void from_json(const nlohmann::json& j, InclusionSpec& s);

}  // namespace gpd::microgen
