#include "gpd/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gpd/errors.hpp"

namespace gpd::oracle {

bool MaterialRanges::contains(const MaterialPoint& mu) const {
    return mu.mu1 >= mu1_min && mu.mu1 <= mu1_max && mu.mu2 >= mu2_min && mu.mu2 <= mu2_max;
}

void MaterialRanges::check(const MaterialPoint& mu) const {
    if (!(mu.mu1 >= mu1_min && mu.mu1 <= mu1_max)) {
        throw DomainError("mu1 = " + std::to_string(mu.mu1) + " outside [" + std::to_string(mu1_min) + ", " +
                          std::to_string(mu1_max) + "]");
    }
    if (!(mu.mu2 >= mu2_min && mu.mu2 <= mu2_max)) {
        throw DomainError("mu2 = " + std::to_string(mu.mu2) + " outside [" + std::to_string(mu2_min) + ", " +
                          std::to_string(mu2_max) + "]");
    }
}

void OracleConfig::validate() const {
    if (!(applied_strain > 0.0)) throw ArgumentError("applied_strain must be positive");
    if (!(boundary_length > 0.0)) throw ArgumentError("boundary_length must be positive");
    if (!(nonseparable_weight >= 0.0)) throw ArgumentError("nonseparable_weight must be nonnegative");
    if (!std::isfinite(amplitude)) throw ArgumentError("amplitude must be finite");
}

namespace {

// Lower envelope of parabolas; f holds squared distances along one line.
void edt_1d(const double* f, double* d, std::size_t n, std::vector<std::size_t>& v, std::vector<double>& z) {
    const double inf = std::numeric_limits<double>::infinity();
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < inf) {
            first = q;
            break;
        }
    if (first == n) {
        for (std::size_t q = 0; q < n; ++q) d[q] = inf;
        return;
    }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!(f[q] < inf)) continue;
        const double fq = f[q] + static_cast<double>(q * q);
        double s;
        while (true) {
            const double p = static_cast<double>(v[k]);
            s = (fq - (f[v[k]] + p * p)) / (2.0 * (static_cast<double>(q) - p));
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[k]) {
            v[k] = q;
            z[k + 1] = inf;
        } else {
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
        d[q] = diff * diff + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& target, std::size_t n) {
    if (target.size() != n * n) throw ArgumentError("distance transform: grid size mismatch");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> g(n * n);
    for (std::size_t i = 0; i < n * n; ++i) g[i] = target[i] ? 0.0 : inf;
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<std::size_t> v(n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) f[i] = g[i * n + j];
        edt_1d(f.data(), d.data(), n, v, z);
        for (std::size_t i = 0; i < n; ++i) g[i * n + j] = d[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        edt_1d(&g[i * n], d.data(), n, v, z);
        std::copy(d.begin(), d.end(), g.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return g;
}

std::vector<double> signed_distance(const microgen::RVEImage& img) {
    const std::size_t n = img.resolution;
    if (n == 0 || img.pixels.size() != n * n) throw ArgumentError("signed_distance: malformed image");
    std::size_t ones = 0;
    for (auto p : img.pixels) ones += p ? 1 : 0;
    if (ones == 0 || ones == img.pixels.size()) throw ArgumentError("signed_distance: image has a single phase");

    std::vector<std::uint8_t> matrix(img.pixels.size());
    for (std::size_t i = 0; i < matrix.size(); ++i) matrix[i] = img.pixels[i] ? 0 : 1;
    const auto to_inclusion = squared_distance_transform(img.pixels, n);
    const auto to_matrix = squared_distance_transform(matrix, n);
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = img.pixels[i] ? -(std::sqrt(to_matrix[i]) - 0.5) : std::sqrt(to_inclusion[i]) - 0.5;
    }
    return out;
}

std::vector<double> stress_field(const std::vector<double>& signed_dist, const MaterialPoint& mu,
                                 const OracleConfig& cfg) {
    cfg.validate();
    if (!(mu.mu1 > 0.0 && mu.mu2 > 0.0)) throw DomainError("moduli must be positive");
    const double e = cfg.applied_strain;
    const double log_ratio = std::log(mu.mu2 / mu.mu1);
    const double harmonic = mu.mu1 * mu.mu2 / (mu.mu1 + mu.mu2);
    std::vector<double> out(signed_dist.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = signed_dist[i] / cfg.boundary_length;
        const double phi = std::exp(-r * r);
        out[i] = e * mu.mu1 * (1.0 + cfg.amplitude * phi * log_ratio) + cfg.nonseparable_weight * e * phi * phi * harmonic;
    }
    return out;
}

std::vector<double> stress_field(const microgen::RVEImage& img, const MaterialPoint& mu, const OracleConfig& cfg,
                                 const MaterialRanges& ranges) {
    ranges.check(mu);
    return stress_field(signed_distance(img), mu, cfg);
}

std::vector<double> CollocationGrid::mu1_values() const {
    std::vector<double> v(kGridMu1);
    for (std::size_t j = 0; j < kGridMu1; ++j)
        v[j] = ranges.mu1_min + (ranges.mu1_max - ranges.mu1_min) * static_cast<double>(j) / (kGridMu1 - 1);
    return v;
}

std::vector<double> CollocationGrid::mu2_values() const {
    std::vector<double> v(kGridMu2);
    for (std::size_t i = 0; i < kGridMu2; ++i)
        v[i] = ranges.mu2_min + (ranges.mu2_max - ranges.mu2_min) * static_cast<double>(i) / (kGridMu2 - 1);
    return v;
}

CollocationGrid collocation_grid(const MaterialRanges& ranges) {
    if (!(ranges.mu1_min > 0.0 && ranges.mu1_max > ranges.mu1_min && ranges.mu2_min > 0.0 &&
          ranges.mu2_max > ranges.mu2_min)) {
        throw ArgumentError("collocation_grid: invalid material ranges");
    }
    CollocationGrid g;
    g.ranges = ranges;
    const auto m1 = g.mu1_values();
    const auto m2 = g.mu2_values();
    for (std::size_t i = 0; i < kGridMu2; ++i)
        for (std::size_t j = 0; j < kGridMu1; ++j) g.points.push_back({m1[j], m2[i]});
    std::vector<bool> is_test(g.points.size(), false);
    for (const auto& [i, j] : kTestLattice) is_test[i * kGridMu1 + j] = true;
    for (std::size_t p = 0; p < g.points.size(); ++p) (is_test[p] ? g.test_indices : g.train_indices).push_back(p);
    return g;
}

}  // namespace gpd::oracle
