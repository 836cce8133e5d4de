#include "gpd/pipeline/workflows.hpp"

#include <algorithm>
#include <cmath>

#include "gpd/errors.hpp"

namespace gpd::pipeline {

using numkit::Batch;
using numkit::Matrix;

namespace {

Matrix row_matrix(std::span<const double> v) { return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end())); }

// Linear-interpolated quantile of sorted values.
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

Batch<float> image_batch(const std::vector<microgen::RVEImage>& images) {
    if (images.empty()) throw ArgumentError("image_batch: no images");
    const std::size_t r = images.front().resolution;
    Batch<float> b(images.size(), {1, r, r});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].resolution != r || images[i].pixels.size() != r * r) {
            throw ArgumentError("image_batch: image " + std::to_string(i) + " has a different resolution");
        }
        std::transform(images[i].pixels.begin(), images[i].pixels.end(), b.sample(i).begin(),
                       [](std::uint8_t p) { return p ? 1.0f : 0.0f; });
    }
    return b;
}

Batch<float> spatial_dataset(const std::vector<spgd::SeparatedSolution>& sols, const spgd::GlobalNormalization& norm,
                             std::size_t resolution) {
    const std::size_t plane = resolution * resolution;
    Batch<float> b(sols.size(), {spgd::kModes, resolution, resolution});
    for (std::size_t i = 0; i < sols.size(); ++i) {
        if (sols[i].field_size != plane) throw ArgumentError("spatial_dataset: solution field size differs from R^2");
        auto out = b.sample(i);
        for (std::size_t m = 0; m < spgd::kModes; ++m)
            for (std::size_t p = 0; p < plane; ++p)
                out[m * plane + p] = static_cast<float>(norm.field[m].forward(sols[i].modes[m].f[p]));
    }
    return b;
}

Batch<float> curve_dataset(const std::vector<spgd::SeparatedSolution>& sols, const spgd::GlobalNormalization& norm,
                           spgd::Which which) {
    Batch<float> b(sols.size(), {spgd::kModes * spgd::kCurvePoints, 1, 1});
    for (std::size_t i = 0; i < sols.size(); ++i) {
        auto out = b.sample(i);
        for (std::size_t m = 0; m < spgd::kModes; ++m) {
            const auto c = spgd::curve_samples(sols[i], m, which, norm);
            std::transform(c.begin(), c.end(), out.begin() + static_cast<std::ptrdiff_t>(m * spgd::kCurvePoints),
                           [](double v) { return static_cast<float>(v); });
        }
    }
    return b;
}

std::vector<double> encode_image(const ModelBundle& b, const microgen::RVEImage& img) {
    if (img.resolution != b.resolution || img.pixels.size() != b.resolution * b.resolution) {
        throw ArgumentError("image resolution " + std::to_string(img.resolution) + " does not match the bundle's " +
                            std::to_string(b.resolution));
    }
    const Matrix a = rrae::encode(b.geometry, image_batch({img}));
    return {a.data().begin(), a.data().end()};
}

spgd::SeparatedSolution assemble(const ModelBundle& b, const latentmap::Gammas& g) {
    spgd::SeparatedSolution sol;
    sol.basis1 = b.basis1;
    sol.basis2 = b.basis2;
    const std::size_t plane = b.resolution * b.resolution;
    sol.field_size = plane;

    const auto fields = rrae::decode(b.spatial, row_matrix(g.x));
    const auto c1 = rrae::decode(b.m1, row_matrix(g.one));
    const auto c2 = rrae::decode(b.m2, row_matrix(g.two));
    for (std::size_t m = 0; m < spgd::kModes; ++m) {
        auto& mode = sol.modes[m];
        mode.f.resize(plane);
        for (std::size_t p = 0; p < plane; ++p) {
            mode.f[p] = b.normalization.field[m].inverse(static_cast<double>(fields.values[m * plane + p]));
        }
        std::vector<double> raw1(spgd::kCurvePoints), raw2(spgd::kCurvePoints);
        for (std::size_t t = 0; t < spgd::kCurvePoints; ++t) {
            raw1[t] = b.normalization.m1[m].inverse(static_cast<double>(c1.values[m * spgd::kCurvePoints + t]));
            raw2[t] = b.normalization.m2[m].inverse(static_cast<double>(c2.values[m * spgd::kCurvePoints + t]));
        }
        mode.lambda1 = spgd::curve_to_lambda(b.basis1, raw1);
        mode.lambda2 = spgd::curve_to_lambda(b.basis2, raw2);
    }
    return sol;
}

spgd::SeparatedSolution solution_for_alpha(const ModelBundle& b, std::span<const double> alpha) {
    if (alpha.size() != b.geometry.k()) {
        throw ArgumentError("alpha must have " + std::to_string(b.geometry.k()) + " values, got " +
                            std::to_string(alpha.size()));
    }
    return assemble(b, latentmap::predict_gammas(b.regressors, b.table, alpha));
}

spgd::SeparatedSolution reconstruct_for_geometry(const ModelBundle& b, const microgen::RVEImage& img) {
    const auto alpha = encode_image(b, img);
    return solution_for_alpha(b, alpha);
}

DecodedImage decode_image(const ModelBundle& b, std::span<const double> alpha) {
    if (alpha.size() != b.geometry.k()) {
        throw ArgumentError("alpha must have " + std::to_string(b.geometry.k()) + " values, got " +
                            std::to_string(alpha.size()));
    }
    auto x = rrae::decode(b.geometry, row_matrix(alpha));
    DecodedImage out;
    out.binary.resolution = b.resolution;
    out.binary.pixels = rrae::binary_view(x, 0);
    out.values = std::move(x.values);
    return out;
}

std::vector<Design> generate_designs(const ModelBundle& b, std::size_t n, std::uint64_t seed) {
    const Matrix alphas = genlab::sample_latents(b.gmm, n, seed);
    std::vector<Design> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = alphas.row(i);
        out.push_back({std::vector<double>(a.begin(), a.end()), decode_image(b, a).binary, solution_for_alpha(b, a)});
    }
    return out;
}

bool is_two_phase(const microgen::RVEImage& img) {
    bool zero = false, one = false;
    for (auto p : img.pixels) {
        if (p != 0 && p != 1) return false;
        (p ? one : zero) = true;
    }
    return zero && one;
}

double probe_minimum(const spgd::SeparatedSolution& sol, const oracle::MaterialRanges& r, std::size_t n) {
    if (n < 2) throw ArgumentError("probe grid needs at least 2 points per axis");
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double t1 = static_cast<double>(j) / static_cast<double>(n - 1);
            const double t2 = static_cast<double>(i) / static_cast<double>(n - 1);
            const oracle::MaterialPoint mu{r.mu1_min + t1 * (r.mu1_max - r.mu1_min), r.mu2_min + t2 * (r.mu2_max - r.mu2_min)};
            for (double v : spgd::evaluate(sol, mu)) lo = std::min(lo, v);
        }
    return lo;
}

double grid_mape(const spgd::SeparatedSolution& pred, const spgd::SeparatedSolution& ref, const oracle::CollocationGrid& grid) {
    std::vector<std::vector<double>> p, q;
    for (const auto& mu : grid.points) {
        p.push_back(spgd::evaluate(pred, mu));
        q.push_back(spgd::evaluate(ref, mu));
    }
    return spgd::mape(p, q).percent;
}

LatentBounds latent_bounds(const ModelBundle& b) {
    LatentBounds out;
    const auto& a = b.table.alpha;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        std::vector<double> col(b.table.train_count);
        for (std::size_t i = 0; i < b.table.train_count; ++i) col[i] = a(i, c);
        out.p1.push_back(quantile(col, 0.01));
        out.p99.push_back(quantile(col, 0.99));
    }
    return out;
}

}  // namespace gpd::pipeline
