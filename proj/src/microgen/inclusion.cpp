#include "gpd/microgen/inclusion.hpp"

#include <cmath>
#include <numbers>

#include "gpd/errors.hpp"
#include "gpd/rng.hpp"

namespace gpd::microgen {

const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::square: return "square";
        case ShapeKind::rectangle: return "rectangle";
    }
    return "circle";
}

ShapeKind shape_from_string(const std::string& s) {
    if (s == "circle") return ShapeKind::circle;
    if (s == "ellipse") return ShapeKind::ellipse;
    if (s == "square") return ShapeKind::square;
    if (s == "rectangle") return ShapeKind::rectangle;
    throw ArgumentError("unknown inclusion shape '" + s + "'");
}

std::pair<double, double> half_extents(const InclusionSpec& s) {
    const double c = std::cos(s.orientation);
    const double n = std::sin(s.orientation);
    if (s.shape == ShapeKind::circle || s.shape == ShapeKind::ellipse) {
        return {std::sqrt(s.a * s.a * c * c + s.b * s.b * n * n), std::sqrt(s.a * s.a * n * n + s.b * s.b * c * c)};
    }
    return {s.a * std::abs(c) + s.b * std::abs(n), s.a * std::abs(n) + s.b * std::abs(c)};
}

void validate(const InclusionSpec& s) {
    const double tol = 1e-12;
    if (!(s.a >= kMinHalfAxis - tol && s.a <= kMaxHalfAxis + tol && s.b >= kMinHalfAxis - tol &&
          s.b <= kMaxHalfAxis + tol)) {
        throw ArgumentError("inclusion half axes must lie in [0.08, 0.35]");
    }
    if ((s.shape == ShapeKind::circle || s.shape == ShapeKind::square) && std::abs(s.a - s.b) > tol) {
        throw ArgumentError(std::string(to_string(s.shape)) + " requires equal half axes");
    }
    if (!(s.orientation >= 0.0 && s.orientation < std::numbers::pi)) {
        throw ArgumentError("inclusion orientation must lie in [0, pi)");
    }
    const auto [ex, ey] = half_extents(s);
    if (s.cx - ex < kMargin - tol || s.cx + ex > 1.0 - kMargin + tol || s.cy - ey < kMargin - tol ||
        s.cy + ey > 1.0 - kMargin + tol) {
        throw ArgumentError("inclusion violates the 0.05 margin to the cell boundary");
    }
}

bool contains(const InclusionSpec& s, double x, double y) {
    const double dx = x - s.cx;
    const double dy = y - s.cy;
    const double c = std::cos(s.orientation);
    const double n = std::sin(s.orientation);
    const double u = dx * c + dy * n;
    const double v = -dx * n + dy * c;
    if (s.shape == ShapeKind::circle || s.shape == ShapeKind::ellipse) {
        return (u / s.a) * (u / s.a) + (v / s.b) * (v / s.b) <= 1.0;
    }
    return std::abs(u) <= s.a && std::abs(v) <= s.b;
}

InclusionSpec sample_inclusion(std::uint64_t seed, const ClassMix& mix, double center_jitter) {
    const double weights[4] = {mix.circle, mix.ellipse, mix.square, mix.rectangle};
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ArgumentError("class mix weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("class mix must sum to 1");
    if (!(center_jitter >= 0.0 && center_jitter <= 0.45)) throw ArgumentError("center jitter must lie in [0, 0.45]");

    Rng rng(seed);
    const double pick = rng.uniform();
    ShapeKind kind = ShapeKind::rectangle;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
        acc += weights[k];
        if (pick < acc) {
            kind = static_cast<ShapeKind>(k);
            break;
        }
    }

    for (int attempt = 0; attempt < 1000; ++attempt) {
        InclusionSpec s;
        s.shape = kind;
        s.a = rng.uniform(kMinHalfAxis, kMaxHalfAxis);
        s.b = (kind == ShapeKind::circle || kind == ShapeKind::square) ? s.a
                                                                        : rng.uniform(kMinHalfAxis, kMaxHalfAxis);
        s.orientation = kind == ShapeKind::circle ? 0.0 : rng.uniform(0.0, std::numbers::pi);
        s.cx = 0.5 + center_jitter * rng.uniform(-1.0, 1.0);
        s.cy = 0.5 + center_jitter * rng.uniform(-1.0, 1.0);
        const auto [ex, ey] = half_extents(s);
        if (s.cx - ex >= kMargin && s.cx + ex <= 1.0 - kMargin && s.cy - ey >= kMargin && s.cy + ey <= 1.0 - kMargin) {
            return s;
        }
    }
    throw GenerationError("sample_inclusion: no admissible geometry after 1000 tries (seed " + std::to_string(seed) +
                          ")");
}

std::vector<InclusionSpec> sample_inclusions(std::size_t count, std::uint64_t base_seed, const ClassMix& mix,
                                             double center_jitter) {
    std::vector<InclusionSpec> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_inclusion(derive_seed(base_seed, i), mix, center_jitter));
    return out;
}

void to_json(nlohmann::json& j, const InclusionSpec& s) {
    j = {{"shape", to_string(s.shape)}, {"cx", s.cx}, {"cy", s.cy}, {"a", s.a}, {"b", s.b}, {"orientation", s.orientation}};
}

void from_json(const nlohmann::json& j, InclusionSpec& s) {
    s.shape = shape_from_string(j.at("shape").get<std::string>());
    s.cx = j.at("cx").get<double>();
    s.cy = j.at("cy").get<double>();
    s.a = j.at("a").get<double>();
    s.b = j.at("b").get<double>();
    s.orientation = j.at("orientation").get<double>();
}

double RVEImage::volume_fraction() const {
    if (pixels.empty()) return 0.0;
    std::size_t ones = 0;
    for (auto p : pixels) ones += p;
    return static_cast<double>(ones) / static_cast<double>(pixels.size());
}

RVEImage rasterize(const InclusionSpec& spec, std::size_t resolution) {
    if (resolution < 16) throw ArgumentError("rasterize: resolution must be at least 16");
    validate(spec);
    RVEImage img;
    img.resolution = resolution;
    img.spec = spec;
    img.pixels.assign(resolution * resolution, 0);
    const double inv = 1.0 / static_cast<double>(resolution);
    for (std::size_t i = 0; i < resolution; ++i)
        for (std::size_t j = 0; j < resolution; ++j)
            img.pixels[i * resolution + j] = contains(spec, (j + 0.5) * inv, (i + 0.5) * inv) ? 1 : 0;
    const double vf = img.volume_fraction();
    if (!(vf > 0.0 && vf < 0.5)) {
        throw ArgumentError("rasterize: volume fraction " + std::to_string(vf) + " outside (0, 0.5)");
    }
    return img;
}

}  // namespace gpd::microgen
