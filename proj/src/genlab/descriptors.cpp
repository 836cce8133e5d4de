#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "gpd/errors.hpp"
#include "gpd/genlab/genlab.hpp"

namespace gpd::genlab {

namespace {

constexpr double kDescriptorRidge = 1e-8;
constexpr double kIsotropyRatio = 1.08;  // a/b below this snaps to circle/square

struct Moments {
    double count = 0.0;
    double cx = 0.0, cy = 0.0;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;  // central, unit-square units
};

Moments moments(std::span<const std::uint8_t> mask, std::size_t n) {
    Moments m;
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) {
                m.count += 1.0;
                m.cx += (static_cast<double>(j) + 0.5) * h;
                m.cy += (static_cast<double>(i) + 0.5) * h;
            }
    if (m.count == 0.0) return m;
    m.cx /= m.count;
    m.cy /= m.count;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (mask[i * n + j]) {
                const double dx = (static_cast<double>(j) + 0.5) * h - m.cx;
                const double dy = (static_cast<double>(i) + 0.5) * h - m.cy;
                m.sxx += dx * dx;
                m.syy += dy * dy;
                m.sxy += dx * dy;
            }
    // Each pixel is a square of side h, not a point.
    m.sxx = m.sxx / m.count + h * h / 12.0;
    m.syy = m.syy / m.count + h * h / 12.0;
    m.sxy /= m.count;
    return m;
}

// Principal variances (descending) and the major-axis angle in [0, pi).
void principal(const Moments& m, double& l1, double& l2, double& theta) {
    const double tr = m.sxx + m.syy;
    const double disc = std::sqrt(std::max(0.0, 0.25 * (m.sxx - m.syy) * (m.sxx - m.syy) + m.sxy * m.sxy));
    l1 = 0.5 * tr + disc;
    l2 = std::max(0.5 * tr - disc, 0.0);
    theta = 0.5 * std::atan2(2.0 * m.sxy, m.sxx - m.syy);
    if (theta < 0.0) theta += std::numbers::pi;
}

std::vector<std::uint8_t> threshold(const microgen::RVEImage& img) {
    if (img.pixels.size() != img.resolution * img.resolution) throw ArgumentError("image size does not match its resolution");
    std::vector<std::uint8_t> mask(img.pixels.size());
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = img.pixels[p] ? 1 : 0;
    return mask;
}

std::size_t mismatch(const microgen::InclusionSpec& s, std::span<const std::uint8_t> mask, std::size_t n) {
    std::size_t bad = 0;
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const bool in = microgen::contains(s, (static_cast<double>(j) + 0.5) * h, (static_cast<double>(i) + 0.5) * h);
            bad += in != (mask[i * n + j] != 0);
        }
    return bad;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void gaussian(const std::vector<Descriptor>& set, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const auto d = static_cast<Eigen::Index>(std::tuple_size_v<Descriptor>);
    mean = Eigen::VectorXd::Zero(d);
    cov = Eigen::MatrixXd::Zero(d, d);
    for (const auto& v : set) mean += Eigen::Map<const Eigen::VectorXd>(v.data(), d);
    mean /= static_cast<double>(set.size());
    for (const auto& v : set) {
        const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(v.data(), d) - mean;
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(set.size());
    cov += kDescriptorRidge * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

Descriptor describe(std::span<const std::uint8_t> mask, std::size_t n) {
    if (n == 0 || mask.size() != n * n) throw ArgumentError("describe: mask size does not match the resolution");
    const Moments m = moments(mask, n);
    if (m.count == 0.0) return {0.0, 0.0, 1.0, 0.0, 0.0};
    std::size_t edges = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const bool v = mask[i * n + j] != 0;
            if (j + 1 < n && v != (mask[i * n + j + 1] != 0)) ++edges;
            if (i + 1 < n && v != (mask[(i + 1) * n + j] != 0)) ++edges;
        }
    double l1, l2, theta;
    principal(m, l1, l2, theta);
    const double nn = static_cast<double>(n);
    return {m.count / (nn * nn), static_cast<double>(edges) / nn, std::sqrt(l1 / std::max(l2, 1e-300)),
            std::cos(2.0 * theta), std::sin(2.0 * theta)};
}

Descriptor describe(const microgen::RVEImage& img) { return describe(threshold(img), img.resolution); }

double descriptor_distance(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b) {
    if (a.empty() || b.empty()) throw ArgumentError("descriptor_distance: both sets must be nonempty");
    Eigen::VectorXd ma, mb;
    Eigen::MatrixXd ca, cb;
    gaussian(a, ma, ca);
    gaussian(b, mb, cb);
    // tr((Ca Cb)^1/2) = tr((Ca^1/2 Cb Ca^1/2)^1/2), the symmetric form.
    const Eigen::MatrixXd sa = sqrt_psd(ca);
    const Eigen::MatrixXd inner = sa * cb * sa;
    const double cross = sqrt_psd(0.5 * (inner + inner.transpose())).trace();
    const double d = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
    return std::max(d, 0.0);
}

double descriptor_distance(const std::vector<microgen::RVEImage>& a, const std::vector<microgen::RVEImage>& b) {
    std::vector<Descriptor> da, db;
    for (const auto& img : a) da.push_back(describe(img));
    for (const auto& img : b) db.push_back(describe(img));
    return descriptor_distance(da, db);
}

microgen::InclusionSpec estimate_inclusion(const microgen::RVEImage& img) {
    using microgen::InclusionSpec;
    using microgen::ShapeKind;
    const auto mask = threshold(img);
    const std::size_t n = img.resolution;
    const Moments m = moments(mask, n);
    if (m.count == 0.0) throw GenerationError("estimate_inclusion: image has no inclusion pixels");
    double l1, l2, theta;
    principal(m, l1, l2, theta);

    // Ellipse: variance a^2/4 along an axis; rectangle: a^2/3.
    InclusionSpec ell{ShapeKind::ellipse, m.cx, m.cy, 2.0 * std::sqrt(l1), 2.0 * std::sqrt(l2), theta};
    InclusionSpec rect{ShapeKind::rectangle, m.cx, m.cy, std::sqrt(3.0 * l1), std::sqrt(3.0 * l2), theta};
    if (ell.a < kIsotropyRatio * ell.b) {
        ell.shape = ShapeKind::circle;
        ell.a = ell.b = std::sqrt(ell.a * ell.b);
        ell.orientation = 0.0;
        rect.shape = ShapeKind::square;
        rect.a = rect.b = std::sqrt(rect.a * rect.b);
        // Second moments of a square are isotropic; search the angle.
        std::size_t best = std::numeric_limits<std::size_t>::max();
        InclusionSpec trial = rect;
        for (int deg = 0; deg < 90; ++deg) {
            trial.orientation = deg * std::numbers::pi / 180.0;
            const std::size_t e = mismatch(trial, mask, n);
            if (e < best) best = e, rect.orientation = trial.orientation;
        }
    }
    InclusionSpec s = mismatch(ell, mask, n) <= mismatch(rect, mask, n) ? ell : rect;

    s.a = std::clamp(s.a, microgen::kMinHalfAxis, microgen::kMaxHalfAxis);
    s.b = std::clamp(s.b, microgen::kMinHalfAxis, microgen::kMaxHalfAxis);
    if (s.orientation >= std::numbers::pi) s.orientation -= std::numbers::pi;
    auto [ex, ey] = microgen::half_extents(s);
    const double room = 0.5 - microgen::kMargin;
    if (ex > room || ey > room) {
        const double shrink = room / std::max(ex, ey);
        s.a = std::max(s.a * shrink, microgen::kMinHalfAxis);
        s.b = std::max(s.b * shrink, microgen::kMinHalfAxis);
        std::tie(ex, ey) = microgen::half_extents(s);
    }
    s.cx = std::clamp(s.cx, microgen::kMargin + ex, 1.0 - microgen::kMargin - ex);
    s.cy = std::clamp(s.cy, microgen::kMargin + ey, 1.0 - microgen::kMargin - ey);
    try {
        microgen::validate(s);
    } catch (const ArgumentError& e) {
        throw GenerationError(std::string("estimate_inclusion: no valid inclusion fits the image (") + e.what() + ")");
    }
    return s;
}

}  // namespace gpd::genlab
