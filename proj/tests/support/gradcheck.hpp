#pragma once

// Central finite-difference checks for numkit networks (64-bit).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gpd/numkit/network.hpp"
#include "gpd/rng.hpp"

namespace gpd::testing {

struct GradCheckResult {
    double max_param_rel_error = 0.0;
    double max_input_rel_error = 0.0;
    std::size_t kink_skips = 0;  // coordinates whose +-eps probe crossed a relu kink
    std::size_t coordinates = 0;
};

// Sign pattern of every cached activation; a change between the +eps and
// -eps evaluations means the difference quotient straddles a relu kink.
inline std::vector<bool> activation_pattern(const numkit::NetworkSpec& spec,
                                            const numkit::ForwardCache<double>& cache) {
    std::vector<bool> bits;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const bool relu = std::visit(
            [](const auto& layer) {
                if constexpr (requires { layer.act; }) return layer.act == numkit::Activation::relu;
                else return false;
            },
            spec.layers[l]);
        if (!relu) continue;
        for (double v : cache.activations[l + 1].values) bits.push_back(v > 0.0);
    }
    return bits;
}

// Entries whose analytic and numeric magnitudes both fall below `floor` are
// compared on an absolute scale of `floor`.
inline double rel_error(double a, double n, double floor = 1e-6) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline GradCheckResult gradcheck(const numkit::NetworkSpec& spec, std::uint64_t seed, std::size_t batch = 2,
                                 double eps = 1e-4) {
    numkit::Network<double> net(spec);
    Rng rng(seed);
    std::vector<double> params = net.init_params(seed);
    for (double& p : params) p += 0.05 * rng.normal();  // nonzero biases too

    numkit::Batch<double> x(batch, spec.input);
    for (double& v : x.values) v = rng.normal();
    numkit::Batch<double> probe(batch, net.output_shape());
    for (double& v : probe.values) v = rng.normal();

    std::vector<bool> pattern;
    auto loss = [&](const std::vector<double>& p, const numkit::Batch<double>& in) {
        numkit::ForwardCache<double> c;
        const auto y = net.forward(p, in, &c);
        pattern = activation_pattern(spec, c);
        double s = 0.0;
        for (std::size_t i = 0; i < y.values.size(); ++i) s += probe.values[i] * y.values[i];
        return s;
    };

    numkit::ForwardCache<double> cache;
    net.forward(params, x, &cache);
    std::vector<double> grads(params.size(), 0.0);
    const auto dx = net.backward(params, cache, probe, grads);

    GradCheckResult r;
    r.coordinates = params.size() + x.values.size();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto plus = params, minus = params;
        plus[i] += eps;
        minus[i] -= eps;
        const double lp = loss(plus, x);
        const auto pp = pattern;
        const double lm = loss(minus, x);
        if (pp != pattern) {
            ++r.kink_skips;
            continue;
        }
        const double fd = (lp - lm) / (2 * eps);
        r.max_param_rel_error = std::max(r.max_param_rel_error, rel_error(grads[i], fd));
    }
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        auto plus = x, minus = x;
        plus.values[i] += eps;
        minus.values[i] -= eps;
        const double lp = loss(params, plus);
        const auto pp = pattern;
        const double lm = loss(params, minus);
        if (pp != pattern) {
            ++r.kink_skips;
            continue;
        }
        const double fd = (lp - lm) / (2 * eps);
        r.max_input_rel_error = std::max(r.max_input_rel_error, rel_error(dx.values[i], fd));
    }
    return r;
}

struct NamedSpec {
    std::string name;
    numkit::NetworkSpec spec;
};

// One network per layer kind x activation, plus composites shaped like the
// production encoders/decoders.
inline std::vector<NamedSpec> gradcheck_suite() {
    using namespace numkit;
    std::vector<NamedSpec> out;
    for (Activation act : {Activation::relu, Activation::softplus, Activation::linear}) {
        const std::string a = to_string(act);
        out.push_back({"dense/" + a, {Shape{5, 1, 1}, {Dense{5, 4, act}}}});
        out.push_back({"conv2d k3s1p1/" + a, {Shape{2, 5, 5}, {Conv2d{2, 3, 3, 1, 1, act}}}});
        out.push_back({"conv2d k4s2p1/" + a, {Shape{2, 8, 8}, {Conv2d{2, 3, 4, 2, 1, act}}}});
        out.push_back({"conv2d k1s1p0/" + a, {Shape{3, 4, 4}, {Conv2d{3, 2, 1, 1, 0, act}}}});
        out.push_back({"conv2d_transpose k4s2p1/" + a, {Shape{3, 3, 3}, {Conv2dTranspose{3, 2, 4, 2, 1, 0, act}}}});
        out.push_back({"conv2d_transpose k3s2p1op1/" + a, {Shape{2, 3, 3}, {Conv2dTranspose{2, 3, 3, 2, 1, 1, act}}}});
    }
    out.push_back({"reshape+conv", {Shape{12, 1, 1}, {Reshape{Shape{3, 2, 2}}, Conv2d{3, 2, 3, 1, 1, Activation::softplus}}}});
    out.push_back({"encoder composite",
                   {Shape{1, 16, 16},
                    {Conv2d{1, 4, 4, 2, 1, Activation::relu}, Conv2d{4, 6, 4, 2, 1, Activation::relu},
                     Dense{6 * 4 * 4, 8, Activation::softplus}, Dense{8, 5, Activation::linear}}}});
    out.push_back({"decoder composite",
                   {Shape{5, 1, 1},
                    {Dense{5, 8, Activation::softplus}, Dense{8, 3 * 4 * 4, Activation::linear},
                     Reshape{Shape{3, 4, 4}}, Conv2dTranspose{3, 4, 3, 2, 1, 1, Activation::relu},
                     Conv2dTranspose{4, 2, 3, 2, 1, 1, Activation::relu}, Conv2d{2, 3, 1, 1, 0, Activation::linear}}}});
    return out;
}

}  // namespace gpd::testing
