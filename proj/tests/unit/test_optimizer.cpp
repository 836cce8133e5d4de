#include <cmath>

#include "doctest.h"
#include "gpd/errors.hpp"
#include "gpd/numkit/optimizer.hpp"

using namespace gpd::numkit;

TEST_CASE("zero gradient on a fresh state leaves parameters unchanged") {
    for (OptimizerKind kind : {OptimizerKind::adam, OptimizerKind::adabelief}) {
        OptimizerState<double> st({kind}, 3);
        std::vector<double> p = {1.0, -2.0, 0.5};
        const auto before = p;
        std::vector<double> g(3, 0.0);
        optimizer_step<double>(st, p, g, 1e-3);
        CHECK(p == before);
        CHECK(st.step == 1);
    }
}

TEST_CASE("Adam with a constant positive gradient decreases the parameter monotonically") {
    OptimizerState<double> st({OptimizerKind::adam}, 1);
    std::vector<double> p = {0.0};
    std::vector<double> g = {1.0};
    double prev = p[0];
    for (int i = 0; i < 50; ++i) {
        optimizer_step<double>(st, p, g, 1e-2);
        CHECK(p[0] < prev);
        prev = p[0];
    }
    CHECK(st.step == 50);
}

TEST_CASE("AdaBelief tracks (g - m)^2 where Adam tracks g^2") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
    OptimizerState<double> adam({OptimizerKind::adam, b1, b2, eps}, 1);
    OptimizerState<double> belief({OptimizerKind::adabelief, b1, b2, eps}, 1);
    std::vector<double> pa = {0.0}, pb = {0.0};

    // hand-stepped reference, g = +1 then -1
    double m = 0.0, v = 0.0, s = 0.0, xa = 0.0, xb = 0.0;
    const double gs[2] = {1.0, -1.0};
    for (int t = 1; t <= 2; ++t) {
        const double g = gs[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        s = b2 * s + (1 - b2) * (g - m) * (g - m) + eps;
        const double mh = m / (1 - std::pow(b1, t));
        xa -= lr * mh / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        xb -= lr * mh / (std::sqrt(s / (1 - std::pow(b2, t))) + eps);

        std::vector<double> gv = {g};
        optimizer_step<double>(adam, pa, gv, lr);
        optimizer_step<double>(belief, pb, gv, lr);
    }
    CHECK(adam.second[0] == doctest::Approx(v).epsilon(1e-14));
    CHECK(belief.second[0] == doctest::Approx(s).epsilon(1e-14));
    CHECK(pa[0] == doctest::Approx(xa).epsilon(1e-12));
    CHECK(pb[0] == doctest::Approx(xb).epsilon(1e-12));
    // after +1,-1: v = 0.001999, s ~ 0.00179 -> the rules differ
    CHECK(adam.second[0] == doctest::Approx(0.001999).epsilon(1e-9));
    CHECK(belief.second[0] < adam.second[0]);
    CHECK(pa[0] != pb[0]);
}

TEST_CASE("NaN gradient raises a training error naming the block") {
    OptimizerState<float> st({OptimizerKind::adam}, 4);
    std::vector<float> p(4, 0.0f);
    std::vector<float> g = {0.0f, 0.0f, std::nanf(""), 0.0f};
    std::vector<ParamBlock> blocks = {{"layer0.dense.weight", 0, 2}, {"layer0.dense.bias", 2, 2}};
    try {
        optimizer_step<float>(st, p, g, 1e-3, blocks);
        FAIL("expected TrainingError");
    } catch (const gpd::TrainingError& e) {
        CHECK(std::string(e.what()).find("layer0.dense.bias") != std::string::npos);
    }
    CHECK(st.step == 0);
}

TEST_CASE("lr_at follows the staged schedule") {
    LrSchedule s{{{3000, 1e-3}, {3000, 1e-4}, {3000, 1e-5}}};
    CHECK(s.total_steps() == 9000);
    CHECK(s.lr_at(0) == 1e-3);
    CHECK(s.lr_at(2999) == 1e-3);
    CHECK(s.lr_at(3000) == 1e-4);
    CHECK(s.lr_at(8999) == 1e-5);
    CHECK_THROWS_AS(s.lr_at(9000), gpd::ArgumentError);

    LrSchedule single{{{10, 0.5}}};
    CHECK(single.lr_at(9) == 0.5);

    const auto short_s = s.shortened(10);
    CHECK(short_s.total_steps() == 900);
    CHECK(short_s.lr_at(300) == 1e-4);
}

TEST_CASE("schedule validation") {
    CHECK_THROWS_AS(LrSchedule{}.validate(), gpd::ArgumentError);
    CHECK_THROWS_AS((LrSchedule{{{10, 0.0}}}.validate()), gpd::ArgumentError);
    CHECK_NOTHROW((LrSchedule{{{10, 1e-3}}}.validate()));
}
