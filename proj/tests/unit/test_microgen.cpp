#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "doctest.h"
#include "gpd/errors.hpp"
#include "gpd/microgen/container.hpp"
#include "gpd/microgen/inclusion.hpp"
#include "gpd/microgen/pgm.hpp"
#include "gpd/rng.hpp"

using namespace gpd::microgen;

namespace {

// Area of the symmetric difference between raster and shape, relative to the
// shape area. Coverage per pixel comes from an s x s sub-sample grid.
double misclassified_fraction(const InclusionSpec& spec, std::size_t n, std::size_t s, double area) {
    const RVEImage img = rasterize(spec, n);
    double wrong = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t hits = 0;
            for (std::size_t p = 0; p < s; ++p)
                for (std::size_t q = 0; q < s; ++q)
                    hits += contains(spec, (j + (q + 0.5) / s) / n, (i + (p + 0.5) / s) / n) ? 1 : 0;
            const double cover = static_cast<double>(hits) / static_cast<double>(s * s);
            wrong += std::abs(img.pixels[i * n + j] - cover);
        }
    }
    return wrong / static_cast<double>(n * n) / area;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("gpd_test_" + name);
}

}  // namespace

TEST_CASE("forced circle mix gives a circle with equal axes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = sample_inclusion(seed, ClassMix{1.0, 0.0, 0.0, 0.0});
        CHECK(s.shape == ShapeKind::circle);
        CHECK(s.a == s.b);
    }
}

TEST_CASE("sample_inclusion is deterministic per seed") {
    CHECK(sample_inclusion(42) == sample_inclusion(42));
    CHECK_FALSE(sample_inclusion(42) == sample_inclusion(43));
}

TEST_CASE("default mix gives about half rounded shapes over 10000 draws") {
    std::size_t rounded = 0;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = sample_inclusion(gpd::derive_seed(7, i)).shape;
        rounded += (k == ShapeKind::circle || k == ShapeKind::ellipse) ? 1 : 0;
    }
    const double frac = static_cast<double>(rounded) / n;
    CAPTURE(frac);
    CHECK(std::abs(frac - 0.5) <= 0.02);
}

TEST_CASE("class mix must be a distribution") {
    CHECK_THROWS_AS(sample_inclusion(1, ClassMix{0.5, 0.5, 0.5, 0.0}), gpd::ArgumentError);
    CHECK_THROWS_AS(sample_inclusion(1, ClassMix{-0.5, 0.5, 0.5, 0.5}), gpd::ArgumentError);
}

TEST_CASE("rasterized circle area matches the analytic area at 148") {
    const InclusionSpec c{ShapeKind::circle, 0.5, 0.5, 0.25, 0.25, 0.0};
    const auto img = rasterize(c, 148);
    std::size_t count = 0;
    for (auto p : img.pixels) count += p;
    const double analytic = std::numbers::pi * (0.25 * 148) * (0.25 * 148);
    CHECK(std::abs(count - analytic) / analytic < 0.01);
}

TEST_CASE("axis aligned square fills a block of side 0.4 n") {
    const InclusionSpec sq{ShapeKind::square, 0.5, 0.5, 0.2, 0.2, 0.0};
    const std::size_t n = 100;
    const auto img = rasterize(sq, n);
    std::size_t lo = n, hi = 0, count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (img.pixels[i * n + j]) {
                lo = std::min(lo, j);
                hi = std::max(hi, j);
                ++count;
            }
    const std::size_t side = hi - lo + 1;
    CHECK(std::abs(static_cast<double>(side) - 40.0) <= 1.0);
    CHECK(count == side * side);
    CHECK(img.pixels == rasterize(sq, n).pixels);
}

TEST_CASE("rasterize rejects bad input") {
    const InclusionSpec ok{ShapeKind::circle, 0.5, 0.5, 0.25, 0.25, 0.0};
    CHECK_THROWS_AS(rasterize(ok, 15), gpd::ArgumentError);
    InclusionSpec off = ok;
    off.cx = 0.25;
    CHECK_THROWS_AS(rasterize(off, 64), gpd::ArgumentError);
    InclusionSpec big = ok;
    big.a = big.b = 0.4;
    CHECK_THROWS_AS(rasterize(big, 64), gpd::ArgumentError);
    InclusionSpec uneven = ok;
    uneven.b = 0.2;
    CHECK_THROWS_AS(rasterize(uneven, 64), gpd::ArgumentError);
}

TEST_CASE("raster area error halves as resolution doubles") {
    const InclusionSpec circle{ShapeKind::circle, 0.5, 0.5, 0.25, 0.25, 0.0};
    const InclusionSpec square{ShapeKind::square, 0.5, 0.5, 0.2, 0.2, 0.3};
    const double circle_area = std::numbers::pi * 0.0625;
    const double square_area = 0.16;
    for (std::size_t n : {32u, 64u}) {
        const double ratio_c =
            misclassified_fraction(circle, n, 32, circle_area) / misclassified_fraction(circle, 2 * n, 32, circle_area);
        const double ratio_s =
            misclassified_fraction(square, n, 32, square_area) / misclassified_fraction(square, 2 * n, 32, square_area);
        CAPTURE(n);
        CHECK(ratio_c == doctest::Approx(2.0).epsilon(0.2));
        CHECK(ratio_s == doctest::Approx(2.0).epsilon(0.2));
    }
}

TEST_CASE("599 generated specs all satisfy the invariants") {
    const auto specs = sample_inclusions(599, 2024);
    std::set<std::tuple<double, double, double>> distinct;
    for (const auto& s : specs) {
        CHECK_NOTHROW(validate(s));
        const auto img = rasterize(s, 64);
        const double vf = img.volume_fraction();
        CHECK(vf > 0.0);
        CHECK(vf < 0.5);
        for (auto p : img.pixels) REQUIRE(p <= 1);
        distinct.insert({s.a, s.b, s.orientation});
    }
    CHECK(distinct.size() == specs.size());
}

TEST_CASE("inclusion spec JSON round trip") {
    const auto s = sample_inclusion(99, {}, 0.05);
    const nlohmann::json j = s;
    CHECK(j.get<InclusionSpec>() == s);
}

TEST_CASE("empty container round trips") {
    DatasetContainer c;
    const auto path = temp_file("empty.gpdc");
    write_dataset(c, path);
    CHECK(read_dataset(path) == c);
    std::filesystem::remove(path);
}

TEST_CASE("uint8 148x148 array round trips byte exact") {
    const auto img = rasterize(sample_inclusion(5), 148);
    DatasetContainer c;
    c.meta["seed"] = 5;
    c.put<std::uint8_t>("images", {1, 148, 148}, img.pixels);
    const auto path = temp_file("u8.gpdc");
    write_dataset(c, path);
    const auto back = read_dataset(path);
    CHECK(back.get<std::uint8_t>("images") == img.pixels);
    CHECK(serialize(back) == read_file_bytes(path));
    std::filesystem::remove(path);
}

TEST_CASE("every dtype round trips byte exact") {
    gpd::Rng rng(3);
    std::vector<std::uint8_t> u(37);
    std::vector<float> f(50);
    std::vector<double> d(24);
    for (auto& v : u) v = static_cast<std::uint8_t>(rng.index(256));
    for (auto& v : f) v = static_cast<float>(rng.normal());
    for (auto& v : d) v = rng.normal();
    f[0] = -0.0f;
    d[1] = std::numeric_limits<double>::denorm_min();
    DatasetContainer c;
    c.meta = {{"generator", "test"}, {"counts", {1, 2}}};
    c.put<std::uint8_t>("u", {37}, u);
    c.put<float>("f", {5, 10}, f);
    c.put<double>("d", {2, 3, 4}, d);
    const auto bytes = serialize(c);
    const auto back = deserialize(bytes);
    CHECK(back == c);
    CHECK(serialize(back) == bytes);
    CHECK(std::memcmp(back.get<float>("f").data(), f.data(), f.size() * 4) == 0);
    CHECK(std::memcmp(back.get<double>("d").data(), d.data(), d.size() * 8) == 0);
    CHECK_THROWS_AS(back.get<float>("d"), gpd::FormatError);
    CHECK_THROWS_AS(back.at("missing"), gpd::FormatError);
}

TEST_CASE("container error paths") {
    DatasetContainer c;
    c.put<float>("weights", {2, 2}, std::vector<float>{1, 2, 3, 4});
    CHECK_THROWS_AS(c.put<float>("weights", {1}, std::vector<float>{1}), gpd::ArgumentError);
    CHECK_THROWS_AS(c.put<float>("bad", {3}, std::vector<float>{1, 2}), gpd::ArgumentError);

    const auto path = temp_file("corrupt.gpdc");
    auto bytes = serialize(c);
    bytes[0] = 'X';
    write_file_bytes(path, bytes);
    try {
        read_dataset(path);
        FAIL("expected a format error");
    } catch (const gpd::FormatError& e) {
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    std::filesystem::remove(path);

    auto truncated = serialize(c);
    truncated.pop_back();
    try {
        deserialize(truncated);
        FAIL("expected a format error");
    } catch (const gpd::FormatError& e) {
        CHECK(std::string(e.what()).find("weights") != std::string::npos);
    }

    auto trailing = serialize(c);
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize(trailing), gpd::FormatError);

    auto version = serialize(c);
    version[4] = 9;
    CHECK_THROWS_AS(deserialize(version), gpd::FormatError);
}

TEST_CASE("PGM round trip and parsing") {
    const auto dir = std::filesystem::temp_directory_path() / "gpd_test_pgm";
    std::filesystem::create_directories(dir);
    InclusionSpec s;
    s.shape = ShapeKind::ellipse;
    s.a = 0.3;
    s.b = 0.15;
    s.orientation = 0.4;
    const auto img = rasterize(s, 24);
    write_pgm(img, dir / "a.pgm");
    CHECK(read_pgm(dir / "a.pgm").pixels == img.pixels);

    {
        std::ofstream(dir / "b.pgm") << "P2\n# comment\n2 2\n15\n0 15\n8 7\n";
    }
    const auto b = read_pgm(dir / "b.pgm");
    CHECK(b.resolution == 2);
    CHECK(b.pixels == std::vector<std::uint8_t>{0, 1, 1, 0});

    std::ofstream(dir / "c.pgm") << "P2\n3 2\n255\n0 0 0 0 0 0\n";
    CHECK_THROWS_AS(read_pgm(dir / "c.pgm"), gpd::FormatError);
    std::ofstream(dir / "d.pgm") << "P6\n2 2\n255\n";
    CHECK_THROWS_AS(read_pgm(dir / "d.pgm"), gpd::FormatError);
    std::ofstream(dir / "e.pgm", std::ios::binary) << "P5\n4 4\n255\nab";
    CHECK_THROWS_AS(read_pgm(dir / "e.pgm"), gpd::FormatError);
    CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), gpd::FormatError);
}
