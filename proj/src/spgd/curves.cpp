#include "gpd/spgd/curves.hpp"

#include <algorithm>
#include <cmath>

#include "gpd/errors.hpp"
#include "gpd/numkit/matrix.hpp"

namespace gpd::spgd {

AffineMap AffineMap::covering(double min, double max) {
    if (!(std::isfinite(min) && std::isfinite(max)) || max < min) throw ArgumentError("invalid normalization span");
    if (max - min <= 1e-12 * std::max(1.0, std::abs(max))) return {min - 1.0, max + 1.0};
    return {min, max};
}

namespace {

const ParametricBasis& basis_of(const SeparatedSolution& sol, Which which) {
    return which == Which::m1 ? sol.basis1 : sol.basis2;
}

const std::vector<double>& lambda_of(const SpgdMode& m, Which which) {
    return which == Which::m1 ? m.lambda1 : m.lambda2;
}

double grid_point(const ParametricBasis& b, std::size_t s) {
    return s + 1 == kCurvePoints ? b.hi : b.lo + (b.hi - b.lo) * static_cast<double>(s) / (kCurvePoints - 1);
}

}  // namespace

std::vector<double> raw_curve(const SeparatedSolution& sol, std::size_t mode, Which which) {
    if (mode >= kModes) throw ArgumentError("mode index must lie in [0, 3)");
    const auto& b = basis_of(sol, which);
    const auto& lambda = lambda_of(sol.modes[mode], which);
    std::vector<double> out(kCurvePoints);
    for (std::size_t s = 0; s < kCurvePoints; ++s) out[s] = mode_value(b, lambda, grid_point(b, s));
    return out;
}

std::vector<double> curve_samples(const SeparatedSolution& sol, std::size_t mode, Which which,
                                  const GlobalNormalization& norm) {
    return normalize_values(raw_curve(sol, mode, which), which == Which::m1 ? norm.m1[mode] : norm.m2[mode]);
}

std::vector<double> denormalize(const std::vector<double>& values, const AffineMap& map) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = map.inverse(values[i]);
    return out;
}

std::vector<double> normalize_values(const std::vector<double>& values, const AffineMap& map) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = map.forward(values[i]);
    return out;
}

GlobalNormalization fit_normalization(const std::vector<SeparatedSolution>& solutions) {
    if (solutions.empty()) throw ArgumentError("fit_normalization needs at least one solution");
    GlobalNormalization n;
    for (std::size_t m = 0; m < kModes; ++m) {
        double lo1 = INFINITY, hi1 = -INFINITY, lo2 = INFINITY, hi2 = -INFINITY, lof = INFINITY, hif = -INFINITY;
        for (const auto& sol : solutions) {
            for (double v : raw_curve(sol, m, Which::m1)) lo1 = std::min(lo1, v), hi1 = std::max(hi1, v);
            for (double v : raw_curve(sol, m, Which::m2)) lo2 = std::min(lo2, v), hi2 = std::max(hi2, v);
            for (double v : sol.modes[m].f) lof = std::min(lof, v), hif = std::max(hif, v);
        }
        n.m1[m] = AffineMap::covering(lo1, hi1);
        n.m2[m] = AffineMap::covering(lo2, hi2);
        n.field[m] = AffineMap::covering(lof, hif);
    }
    return n;
}

std::vector<double> curve_to_lambda(const ParametricBasis& basis, const std::vector<double>& raw, double ridge) {
    if (raw.size() != kCurvePoints) throw ArgumentError("curve_to_lambda expects 1000 samples");
    const std::size_t d = basis.size;
    numkit::Matrix a(d, d);
    std::vector<double> rhs(d, 0.0);
    for (std::size_t s = 0; s < kCurvePoints; ++s) {
        const auto phi = basis_eval(basis, grid_point(basis, s));
        for (std::size_t i = 0; i < d; ++i) {
            rhs[i] += phi[i] * raw[s];
            for (std::size_t j = 0; j < d; ++j) a(i, j) += phi[i] * phi[j];
        }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += a(i, i);
    return numkit::solve_spd(a, rhs, ridge * trace / static_cast<double>(d));
}

nlohmann::json to_json(const ParametricBasis& b) {
    return {{"kind", to_string(b.kind)}, {"lo", b.lo}, {"hi", b.hi}, {"size", b.size},
            {"correlation_length", b.correlation_length}};
}

ParametricBasis basis_from_json(const nlohmann::json& j) {
    ParametricBasis b;
    b.kind = basis_kind_from_string(j.at("kind").get<std::string>());
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
    b.size = j.at("size").get<std::size_t>();
    b.correlation_length = j.at("correlation_length").get<double>();
    b.validate();
    return b;
}

nlohmann::json to_json(const GlobalNormalization& n) {
    auto maps = [](const std::array<AffineMap, kModes>& a) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& m : a) out.push_back({m.lo, m.hi});
        return out;
    };
    return {{"m1", maps(n.m1)}, {"m2", maps(n.m2)}, {"field", maps(n.field)}};
}

GlobalNormalization normalization_from_json(const nlohmann::json& j) {
    auto maps = [](const nlohmann::json& a) {
        std::array<AffineMap, kModes> out;
        if (!a.is_array() || a.size() != kModes) throw FormatError("normalization needs three maps");
        for (std::size_t m = 0; m < kModes; ++m) out[m] = {a[m].at(0).get<double>(), a[m].at(1).get<double>()};
        return out;
    };
    return {maps(j.at("m1")), maps(j.at("m2")), maps(j.at("field"))};
}

void put_solutions(microgen::DatasetContainer& c, const std::string& prefix,
                   const std::vector<SeparatedSolution>& solutions) {
    if (solutions.empty()) throw ArgumentError("put_solutions: nothing to store");
    const auto& first = solutions.front();
    const std::size_t x = first.field_size;
    const std::size_t d = first.basis1.size;
    std::vector<double> f, l1, l2, rms;
    for (const auto& s : solutions) {
        if (s.field_size != x || !(s.basis1 == first.basis1) || !(s.basis2 == first.basis2)) {
            throw ArgumentError("put_solutions: solutions disagree on field size or bases");
        }
        for (const auto& m : s.modes) {
            f.insert(f.end(), m.f.begin(), m.f.end());
            l1.insert(l1.end(), m.lambda1.begin(), m.lambda1.end());
            l2.insert(l2.end(), m.lambda2.begin(), m.lambda2.end());
        }
        rms.push_back(s.train_rms.empty() ? 0.0 : s.train_rms.back());
    }
    const std::uint64_t n = solutions.size();
    c.put<double>(prefix + ".f", {n, kModes, x}, f);
    c.put<double>(prefix + ".lambda1", {n, kModes, d}, l1);
    c.put<double>(prefix + ".lambda2", {n, kModes, d}, l2);
    c.put<double>(prefix + ".train_rms", {n}, rms);
    c.meta[prefix] = {{"basis1", to_json(first.basis1)}, {"basis2", to_json(first.basis2)}, {"count", n}};
}

std::vector<SeparatedSolution> get_solutions(const microgen::DatasetContainer& c, const std::string& prefix) {
    if (!c.meta.contains(prefix)) throw FormatError("container has no solutions under '" + prefix + "'");
    const auto& meta = c.meta.at(prefix);
    const auto b1 = basis_from_json(meta.at("basis1"));
    const auto b2 = basis_from_json(meta.at("basis2"));
    const auto& fa = c.at(prefix + ".f");
    if (fa.shape.size() != 3 || fa.shape[1] != kModes) throw FormatError("array '" + prefix + ".f' has a bad shape");
    const std::size_t n = fa.shape[0], x = fa.shape[2], d = b1.size;
    const auto f = c.get<double>(prefix + ".f");
    const auto l1 = c.get<double>(prefix + ".lambda1");
    const auto l2 = c.get<double>(prefix + ".lambda2");
    const auto rms = c.get<double>(prefix + ".train_rms");
    if (l1.size() != n * kModes * d || l2.size() != n * kModes * b2.size || rms.size() != n) {
        throw FormatError("solution arrays under '" + prefix + "' disagree on sizes");
    }
    std::vector<SeparatedSolution> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out[i];
        s.basis1 = b1;
        s.basis2 = b2;
        s.field_size = x;
        s.train_rms = {rms[i]};
        for (std::size_t m = 0; m < kModes; ++m) {
            const std::size_t slot = i * kModes + m;
            s.modes[m].f.assign(f.begin() + slot * x, f.begin() + (slot + 1) * x);
            s.modes[m].lambda1.assign(l1.begin() + slot * d, l1.begin() + (slot + 1) * d);
            s.modes[m].lambda2.assign(l2.begin() + slot * d, l2.begin() + (slot + 1) * d);
        }
    }
    return out;
}

}  // namespace gpd::spgd
