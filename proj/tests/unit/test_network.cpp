#include <cmath>
#include "../support/gradcheck.hpp"
#include "doctest.h"
#include "gpd/errors.hpp"

using namespace gpd::numkit;

TEST_CASE("identity dense layer passes input through") {
    Network<double> net({Shape{3, 1, 1}, {Dense{3, 3, Activation::linear}}});
    std::vector<double> p(net.param_count(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    Batch<double> x(2, Shape{3, 1, 1});
    x.values = {1.0, -2.0, 3.5, 0.25, 7.0, -1.0};
    const auto y = net.forward(p, x);
    CHECK(y.values == x.values);
}

TEST_CASE("relu clamps negatives") {
    Network<double> net({Shape{2, 1, 1}, {Dense{2, 2, Activation::relu}}});
    std::vector<double> p = {1, 0, 0, 1, 0, 0};
    Batch<double> x(1, Shape{2, 1, 1});
    x.values = {-1.0, 2.0};
    const auto y = net.forward(p, x);
    CHECK(y.values[0] == 0.0);
    CHECK(y.values[1] == 2.0);
}

TEST_CASE("relu propagates NaN instead of masking it") {
    Network<double> net({Shape{2, 1, 1}, {Dense{2, 2, Activation::relu}}});
    std::vector<double> p = {1, 0, 0, 1, 0, 0};
    Batch<double> x(1, Shape{2, 1, 1});
    x.values = {std::nan(""), -3.0};
    const auto y = net.forward(p, x);
    CHECK(std::isnan(y.values[0]));
    CHECK(std::isnan(y.values[1]));  // 0 * NaN
}

TEST_CASE("softplus is log(1 + e^x)") {
    Network<double> net({Shape{3, 1, 1}, {Dense{3, 3, Activation::softplus}}});
    std::vector<double> p(net.param_count(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    Batch<double> x(1, Shape{3, 1, 1});
    x.values = {-40.0, 0.0, 3.0};
    const auto y = net.forward(p, x);
    CHECK(y.values[0] == doctest::Approx(std::log1p(std::exp(-40.0))));
    CHECK(y.values[1] == doctest::Approx(std::log(2.0)));
    CHECK(y.values[2] == doctest::Approx(std::log1p(std::exp(3.0))));
}

TEST_CASE("3x3 all-ones kernel on a one-hot image gives a 3x3 block of ones") {
    Network<double> net({Shape{1, 7, 7}, {Conv2d{1, 1, 3, 1, 1, Activation::linear}}});
    std::vector<double> p(net.param_count(), 1.0);
    p.back() = 0.0;  // bias
    Batch<double> x(1, Shape{1, 7, 7});
    x.values[3 * 7 + 3] = 1.0;
    const auto y = net.forward(p, x);
    for (std::size_t r = 0; r < 7; ++r)
        for (std::size_t c = 0; c < 7; ++c) {
            const bool inside = r >= 2 && r <= 4 && c >= 2 && c <= 4;
            CHECK(y.values[r * 7 + c] == (inside ? 1.0 : 0.0));
        }
}

TEST_CASE("output shapes of the production layer settings") {
    // kernel 4 / stride 2 / padding 1 halves; transposed doubles
    CHECK(conv_output_size(64, 4, 2, 1) == 32);
    CHECK(conv_transpose_output_size(16, 4, 2, 1, 0) == 32);
    // kernel 3 / stride 2 / padding 1 halves even sizes; output_padding 1 doubles back
    CHECK(conv_output_size(64, 3, 2, 1) == 32);
    CHECK(conv_transpose_output_size(16, 3, 2, 1, 1) == 32);
    CHECK(conv_output_size(148, 4, 2, 1) == 74);
}

TEST_CASE("shape mismatches are argument errors") {
    CHECK_THROWS_AS(Network<double>({Shape{4, 1, 1}, {Dense{3, 2, Activation::linear}}}), gpd::ArgumentError);
    CHECK_THROWS_AS(Network<double>({Shape{2, 4, 4}, {Conv2d{3, 2, 3, 1, 1, Activation::linear}}}),
                    gpd::ArgumentError);
    CHECK_THROWS_AS(Network<double>({Shape{12, 1, 1}, {Reshape{Shape{2, 2, 2}}}}), gpd::ArgumentError);

    Network<double> net({Shape{3, 1, 1}, {Dense{3, 2, Activation::linear}}});
    std::vector<double> p(net.param_count(), 0.0);
    Batch<double> wrong(1, Shape{4, 1, 1});
    CHECK_THROWS_AS(net.forward(p, wrong), gpd::ArgumentError);
    std::vector<double> short_params(3, 0.0);
    CHECK_THROWS_AS(net.forward(short_params, Batch<double>(1, Shape{3, 1, 1})), gpd::ArgumentError);
}

TEST_CASE("backward without a forward pass is a usage error") {
    Network<double> net({Shape{2, 1, 1}, {Dense{2, 1, Activation::linear}}});
    std::vector<double> p(net.param_count(), 0.5), g(net.param_count(), 0.0);
    ForwardCache<double> empty;
    CHECK_THROWS_AS(net.backward(p, empty, Batch<double>(1, Shape{1, 1, 1}), g), gpd::UsageError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    const auto suite = gpd::testing::gradcheck_suite();
    for (const auto& [name, spec] : suite) {
        Network<double> net(spec);
        auto p = net.init_params(3);
        Batch<double> x(2, spec.input);
        for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] = std::sin(0.7 * i);
        ForwardCache<double> cache;
        net.forward(p, x, &cache);
        std::vector<double> g(p.size(), 0.0);
        net.backward(p, cache, Batch<double>(2, net.output_shape()), g);
        for (double v : g) REQUIRE(v == 0.0);
    }
}

TEST_CASE("scalar dense layer y = w x: dL/dw = x") {
    Network<double> net({Shape{1, 1, 1}, {Dense{1, 1, Activation::linear}}});
    std::vector<double> p = {3.0, 0.0};
    Batch<double> x(1, Shape{1, 1, 1});
    x.values = {2.0};
    ForwardCache<double> cache;
    net.forward(p, x, &cache);
    Batch<double> up(1, Shape{1, 1, 1});
    up.values = {1.0};
    std::vector<double> g(2, 0.0);
    const auto dx = net.backward(p, cache, up, g);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 1.0);
    CHECK(dx.values[0] == 3.0);
}

TEST_CASE("gradients match central finite differences for every layer and activation") {
    std::uint64_t seed = 100;
    for (const auto& [name, spec] : gpd::testing::gradcheck_suite()) {
        CAPTURE(name);
        const auto r = gpd::testing::gradcheck(spec, seed++);
        CHECK(r.max_param_rel_error < 1e-4);
        CHECK(r.max_input_rel_error < 1e-4);
        CHECK(r.kink_skips * 20 <= r.coordinates);
    }
}

TEST_CASE("forward is bit-deterministic and float/double agree") {
    const NetworkSpec spec = gpd::testing::gradcheck_suite().back().spec;
    Network<float> nf(spec);
    Network<double> nd(spec);
    const auto pf = nf.init_params(5);
    const auto pd = nd.init_params(5);
    Batch<float> xf(3, spec.input);
    Batch<double> xd(3, spec.input);
    for (std::size_t i = 0; i < xf.values.size(); ++i) {
        xd.values[i] = std::cos(0.3 * i);
        xf.values[i] = static_cast<float>(xd.values[i]);
    }
    const auto a = nf.forward(pf, xf);
    const auto b = nf.forward(pf, xf);
    CHECK(a.values == b.values);
    const auto c = nd.forward(pd, xd);
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(c.values[i]).epsilon(1e-4));
}

TEST_CASE("network spec JSON round trip") {
    const NetworkSpec spec = gpd::testing::gradcheck_suite().back().spec;
    const auto j = to_json(spec);
    CHECK(to_json(network_spec_from_json(j)) == j);
}
