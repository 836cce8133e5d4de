#include "gpd/pipeline/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gpd/pipeline/workflows.hpp"
#include "gpd/rng.hpp"

namespace gpd::pipeline {

namespace {

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::vector<double> row_of(const numkit::Matrix& m, std::size_t i) {
    const auto r = m.row(i);
    return {r.begin(), r.end()};
}

numkit::Matrix head_rows(const numkit::Matrix& m, std::size_t n) {
    return numkit::Matrix(n, m.cols(), std::vector<double>(m.data().begin(), m.data().begin() + static_cast<std::ptrdiff_t>(n * m.cols())));
}

}  // namespace

bool EvalReport::consistency_ok() const {
    return !consistency.empty() &&
           std::all_of(consistency.begin(), consistency.end(), [](const ConsistencySample& s) { return s.pass; });
}

bool EvalReport::generation_ok() const {
    const auto& g = generation;
    return g.n > 0 && g.two_phase == g.n && g.positive == g.n && g.distance_generated <= g.distance_disjoint;
}

std::vector<microgen::RVEImage> cross_images(std::size_t n, std::size_t resolution, std::uint64_t seed) {
    std::vector<microgen::RVEImage> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        microgen::InclusionSpec bar;
        bar.shape = microgen::ShapeKind::rectangle;
        bar.a = rng.uniform(0.25, microgen::kMaxHalfAxis);
        bar.b = rng.uniform(microgen::kMinHalfAxis, 0.1);
        bar.orientation = rng.uniform(0.0, std::numbers::pi / 2);
        microgen::InclusionSpec other = bar;
        other.orientation += std::numbers::pi / 2;
        microgen::RVEImage img;
        img.resolution = resolution;
        img.pixels.resize(resolution * resolution);
        const double h = 1.0 / static_cast<double>(resolution);
        for (std::size_t r = 0; r < resolution; ++r) {
            for (std::size_t c = 0; c < resolution; ++c) {
                const double x = (static_cast<double>(c) + 0.5) * h, y = (static_cast<double>(r) + 0.5) * h;
                img.pixels[r * resolution + c] = microgen::contains(bar, x, y) || microgen::contains(other, x, y);
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

EvalReport evaluate(const Pipeline& p, const EvalOptions& opts) {
    EvalReport rep;
    for (Model m : kModels) {
        const auto c = microgen::read_dataset(p.artifact(stage_for(m)));
        rep.losses[to_string(m)] = c.meta.at(std::string(to_string(m)) + "_eval");
    }
    const auto fits = read_spgd(p.artifact(Stage::spgd));
    const auto data = read_data(p.artifact(Stage::data));
    const std::size_t n_train = data.train_count;
    rep.spgd_train_mape = mean(fits.train_mape);
    rep.spgd_test_mape = mean(fits.test_mape);
    rep.regressor_test_mae = microgen::read_dataset(p.artifact(Stage::regressors)).meta.at("regressors_eval").at("test_mae");

    const ModelBundle b = p.load_bundle();
    const auto grid = oracle::collocation_grid(b.ranges);
    const auto& t = b.table;
    for (std::size_t i = 0; i < std::min(opts.consistency_samples, n_train); ++i) {
        ConsistencySample s;
        s.index = i;
        const latentmap::Gammas truth{row_of(t.gamma_x, i), row_of(t.gamma_1, i), row_of(t.gamma_2, i)};
        const auto alpha = row_of(t.alpha, i);
        const auto from_truth = assemble(b, truth);
        const auto from_pred = assemble(b, latentmap::predict_gammas(b.regressors, t, alpha));
        s.reconstruction = grid_mape(from_truth, fits.solutions[i], grid);
        s.regression = grid_mape(from_pred, from_truth, grid);
        s.end_to_end = grid_mape(reconstruct_for_geometry(b, data.images[i]), fits.solutions[i], grid);
        s.bound = opts.bound_slack * (s.reconstruction + s.regression);
        s.pass = std::isfinite(s.end_to_end) && s.end_to_end <= s.bound;
        rep.consistency.push_back(s);
    }

    auto& g = rep.generation;
    const auto designs = generate_designs(b, opts.generate_n, opts.generate_seed);
    g.n = designs.size();
    g.min_probe = std::numeric_limits<double>::infinity();
    std::vector<microgen::RVEImage> generated;
    numkit::Matrix alphas(designs.size(), b.geometry.k());
    for (std::size_t i = 0; i < designs.size(); ++i) {
        const auto& d = designs[i];
        g.two_phase += is_two_phase(d.image);
        const double lo = probe_minimum(d.solution, b.ranges);
        g.positive += lo > 0.0;
        g.min_probe = std::min(g.min_probe, lo);
        std::copy(d.alpha.begin(), d.alpha.end(), alphas.row(i).begin());
        generated.push_back(d.image);
    }
    g.latents_outside = genlab::latent_bounds_check(alphas, head_rows(t.alpha, t.train_count)).outside;
    const std::vector<microgen::RVEImage> train(data.images.begin(), data.images.begin() + static_cast<std::ptrdiff_t>(n_train));
    g.distance_generated = genlab::descriptor_distance(generated, train);
    g.distance_disjoint = genlab::descriptor_distance(cross_images(g.n, b.resolution, opts.disjoint_seed), train);
    return rep;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json cons = nlohmann::json::array();
    for (const auto& s : r.consistency) {
        cons.push_back({{"index", s.index},
                        {"reconstruction_mape", s.reconstruction},
                        {"regression_mape", s.regression},
                        {"end_to_end_mape", s.end_to_end},
                        {"bound", s.bound},
                        {"pass", s.pass}});
    }
    const auto& g = r.generation;
    return {{"losses", r.losses},
            {"spgd", {{"train_mape", r.spgd_train_mape}, {"test_mape", r.spgd_test_mape}}},
            {"regressor_test_mae", r.regressor_test_mae},
            {"consistency", cons},
            {"consistency_ok", r.consistency_ok()},
            {"generation",
             {{"n", g.n},
              {"two_phase", g.two_phase},
              {"positive", g.positive},
              {"min_probe", g.min_probe},
              {"latents_outside", g.latents_outside},
              {"descriptor_distance_generated", g.distance_generated},
              {"descriptor_distance_disjoint", g.distance_disjoint}}},
            {"generation_ok", r.generation_ok()}};
}

}  // namespace gpd::pipeline
