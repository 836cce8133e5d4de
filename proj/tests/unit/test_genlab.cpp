#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gpd/errors.hpp"
#include "gpd/genlab/genlab.hpp"
#include "gpd/rng.hpp"

using namespace gpd::genlab;
using gpd::microgen::InclusionSpec;
using gpd::microgen::ShapeKind;

namespace {

// `per` points around each center with isotropic sigma.
Matrix clusters(const std::vector<std::vector<double>>& centers, std::size_t per, double sigma, std::uint64_t seed) {
    gpd::Rng rng(seed);
    const std::size_t d = centers[0].size();
    Matrix x(centers.size() * per, d);
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per; ++i)
            for (std::size_t j = 0; j < d; ++j) x(c * per + i, j) = centers[c][j] + sigma * rng.normal();
    return x;
}

GmmConfig small_range(std::size_t k_max) {
    GmmConfig c;
    c.k_max = k_max;
    return c;
}

void check_model_invariants(const GmmModel& m) {
    double w = 0;
    for (double v : m.weights) {
        CHECK(v >= 0.0);
        w += v;
    }
    CHECK(std::abs(w - 1.0) < 1e-10);
    for (const auto& c : m.covariances) {
        Matrix l;
        CHECK(gpd::numkit::cholesky(c, l));
    }
    CHECK(m.monotone);
    for (std::size_t i = 1; i < m.ll_history.size(); ++i) CHECK(m.ll_history[i] >= m.ll_history[i - 1] - 1e-10);
}

std::vector<gpd::microgen::RVEImage> images(std::size_t n, std::uint64_t seed, gpd::microgen::ClassMix mix,
                                            std::size_t res = 48) {
    std::vector<gpd::microgen::RVEImage> out;
    for (const auto& s : gpd::microgen::sample_inclusions(n, seed, mix)) out.push_back(gpd::microgen::rasterize(s, res));
    return out;
}

double iou(const InclusionSpec& a, const InclusionSpec& b, std::size_t n) {
    const auto ia = gpd::microgen::rasterize(a, n), ib = gpd::microgen::rasterize(b, n);
    double inter = 0, uni = 0;
    for (std::size_t p = 0; p < ia.pixels.size(); ++p) {
        inter += ia.pixels[p] && ib.pixels[p];
        uni += ia.pixels[p] || ib.pixels[p];
    }
    return inter / uni;
}

}  // namespace

TEST_CASE("BIC selects one component for a single Gaussian") {
    const Matrix x = clusters({{0.5, -1.0, 2.0, 0.0}}, 500, 1.0, 1);
    const auto fit = fit_gmm(x, small_range(6), 2);
    CHECK(fit.model.k() == 1);
    CHECK(fit.candidates.size() == 6);
    check_model_invariants(fit.model);
}

TEST_CASE("BIC selects three well separated clusters") {
    const Matrix x = clusters({{0, 0, 0, 0}, {10, 0, 0, 0}, {0, 10, 10, 0}}, 167, 1.0, 3);
    const auto fit = fit_gmm(x, small_range(6), 4);
    CHECK(fit.model.k() == 3);
    for (const auto& c : fit.candidates) CHECK_FALSE(c.failed);
    check_model_invariants(fit.model);
    const auto rep = latent_bounds_check(sample_latents(fit.model, 2000, 5), x);
    CHECK(rep.fraction_inside >= 0.99);
}

TEST_CASE("parameter count and BIC formula") {
    const Matrix x = clusters({{0, 0, 0, 0}}, 60, 1.0, 5);
    const auto m = fit_gmm_k(x, 2, GmmConfig{}, 1);
    CHECK(m.parameter_count() == 1 + 8 + 20);
    CHECK(m.bic == doctest::Approx(-2 * m.log_likelihood + 29 * std::log(60.0)));
    CHECK(total_log_likelihood(m, x) == doctest::Approx(m.log_likelihood).epsilon(1e-9));
}

TEST_CASE("fit preconditions") {
    const Matrix x = clusters({{0, 0}}, 59, 1.0, 6);
    CHECK_THROWS_AS(fit_gmm(x, GmmConfig{}, 0), gpd::ArgumentError);
    GmmConfig bad;
    bad.k_min = 3;
    bad.k_max = 2;
    CHECK_THROWS_AS(fit_gmm(x, bad, 0), gpd::ArgumentError);
}

TEST_CASE("degenerate data prunes or ridges instead of failing") {
    Matrix x(40, 2);
    for (std::size_t i = 0; i < 40; ++i) x(i, 0) = x(i, 1) = (i < 20) ? 1.0 : 3.0;  // two points repeated
    const auto m = fit_gmm_k(x, 4, GmmConfig{}, 2);
    CHECK(m.k() >= 1);
    CHECK(m.k() <= 4);
    check_model_invariants(m);
}

TEST_CASE("sampling frequencies and determinism") {
    GmmModel m;
    m.weights = {0.2, 0.5, 0.3};
    m.means = Matrix(3, 2, {-100, 0, 0, 0, 100, 0});
    for (int j = 0; j < 3; ++j) m.covariances.push_back(Matrix::identity(2));
    const Matrix s = sample_latents(m, 10000, 11);
    double counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < s.rows(); ++i) counts[s(i, 0) < -50 ? 0 : (s(i, 0) > 50 ? 2 : 1)] += 1;
    for (int j = 0; j < 3; ++j) CHECK(std::abs(counts[j] / 10000 - m.weights[j]) < 0.02);
    const Matrix t = sample_latents(m, 10000, 11);
    CHECK(std::equal(s.data().begin(), s.data().end(), t.data().begin()));
    CHECK_THROWS_AS(sample_latents(m, 0, 1), gpd::ArgumentError);

    GmmModel tight;
    tight.weights = {1.0};
    tight.means = Matrix(1, 4, {1, 2, 3, 4});
    tight.covariances = {1e-6 * Matrix::identity(4)};
    const Matrix u = sample_latents(tight, 100, 3);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(u(i, j) - (j + 1.0)) < 0.01);
}

TEST_CASE("GMM round trips through a container") {
    const Matrix x = clusters({{0, 0, 0, 0}, {10, 0, 0, 0}}, 50, 1.0, 8);
    const auto m = fit_gmm_k(x, 2, GmmConfig{}, 3);
    gpd::microgen::DatasetContainer c;
    put_gmm(c, "gmm", m);
    const auto back = get_gmm(gpd::microgen::deserialize(gpd::microgen::serialize(c), "memory"), "gmm");
    CHECK(back.weights == m.weights);
    CHECK(back.bic == m.bic);
    const Matrix a = sample_latents(back, 20, 1), b = sample_latents(m, 20, 1);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST_CASE("descriptors of known shapes") {
    const auto circle = gpd::microgen::rasterize({ShapeKind::circle, 0.5, 0.5, 0.3, 0.3, 0.0}, 128);
    const auto d = describe(circle);
    CHECK(d[0] == doctest::Approx(std::numbers::pi * 0.09).epsilon(0.02));
    CHECK(d[2] == doctest::Approx(1.0).epsilon(0.02));
    // A digital curve's 4-connected length is (4/pi) times the Euclidean one on average.
    CHECK(d[1] == doctest::Approx(8 * 0.3).epsilon(0.05));

    const auto ell = gpd::microgen::rasterize({ShapeKind::ellipse, 0.5, 0.5, 0.3, 0.1, std::numbers::pi / 4}, 128);
    const auto e = describe(ell);
    CHECK(e[2] == doctest::Approx(3.0).epsilon(0.03));
    CHECK(std::abs(e[3]) < 0.02);
    CHECK(e[4] == doctest::Approx(1.0).epsilon(0.01));

    const std::vector<std::uint8_t> empty(64, 0);
    CHECK(describe(empty, 8) == Descriptor{0.0, 0.0, 1.0, 0.0, 0.0});
}

TEST_CASE("descriptor distance basics") {
    const auto a = images(40, 1, {});
    CHECK(descriptor_distance(a, a) < 1e-9);
    auto shuffled = a;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(descriptor_distance(a, shuffled) < 1e-9);
    const auto b = images(30, 2, {});
    CHECK(descriptor_distance(a, b) == doctest::Approx(descriptor_distance(b, a)).epsilon(1e-9));
    CHECK(descriptor_distance(a, b) >= 0.0);
    CHECK_THROWS_AS(descriptor_distance(a, std::vector<gpd::microgen::RVEImage>{}), gpd::ArgumentError);
    CHECK(descriptor_distance(std::vector<Descriptor>{describe(a[0])}, std::vector<Descriptor>{describe(a[0])}) < 1e-9);
}

TEST_CASE("circles against rectangles score farther than circles against circles") {
    const gpd::microgen::ClassMix circles{1, 0, 0, 0}, rects{0, 0, 0, 1};
    const auto c1 = images(60, 10, circles), c2 = images(60, 11, circles), r = images(60, 12, rects);
    const double same = descriptor_distance(c1, c2), diff = descriptor_distance(c1, r);
    MESSAGE("circle/circle " << same << " circle/rectangle " << diff);
    CHECK(diff > same);
}

TEST_CASE("inclusion estimation recovers the generating shape") {
    const auto specs = gpd::microgen::sample_inclusions(80, 21, {}, 0.1);
    std::size_t same_class = 0;
    double worst = 1.0;
    for (const auto& s : specs) {
        const auto img = gpd::microgen::rasterize(s, 64);
        const auto e = estimate_inclusion(img);
        CHECK_NOTHROW(gpd::microgen::validate(e));
        const bool round = s.shape == ShapeKind::circle || s.shape == ShapeKind::ellipse;
        const bool eround = e.shape == ShapeKind::circle || e.shape == ShapeKind::ellipse;
        same_class += round == eround;
        worst = std::min(worst, iou(s, e, 64));
    }
    MESSAGE("family agreement " << same_class << "/80, worst IoU " << worst);
    CHECK(same_class >= 76);
    CHECK(worst > 0.85);

    gpd::microgen::RVEImage blank;
    blank.resolution = 16;
    blank.pixels.assign(256, 0);
    CHECK_THROWS_AS(estimate_inclusion(blank), gpd::GenerationError);
}
