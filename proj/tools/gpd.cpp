// gpd: offline stages, both online workflows and the HTTP service.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gpd/errors.hpp"
#include "gpd/microgen/pgm.hpp"
#include "gpd/pipeline/evaluate.hpp"
#include "gpd/pipeline/stages.hpp"
#include "gpd/pipeline/workflows.hpp"
#include "gpd/service/service.hpp"
#include "gpd/spgd/curves.hpp"

namespace fs = std::filesystem;
using namespace gpd;
using pipeline::Stage;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kStageFailure = 1, kUsage = 2, kFailure = 3 };

struct Globals {
    std::string config_path;
    std::string out = "gpd-out";
    std::string profile = "desk";
    bool force = false;
    bool quiet = false;
};

pipeline::Pipeline make_pipeline(const Globals& g) {
    json overrides = json::object();
    if (!g.config_path.empty()) overrides = pipeline::read_json_file(g.config_path);
    pipeline::RunOptions opts;
    opts.force = g.force;
    if (!g.quiet) opts.log = [](const std::string& line) { std::cerr << line << "\n"; };
    return pipeline::Pipeline(pipeline::resolve_config(g.profile, overrides), g.out, opts);
}

// The online commands need a bundle that matches the current config.
pipeline::ModelBundle current_bundle(const pipeline::Pipeline& p) {
    const fs::path path = p.artifact(Stage::bundle);
    if (!fs::exists(path)) throw UsageError("no bundle at " + path.string() + "; run 'gpd run-all' first");
    if (!p.up_to_date(Stage::bundle)) {
        throw UsageError("bundle at " + path.string() + " is stale for this config; run 'gpd run-all'");
    }
    return p.load_bundle();
}

void print_reports(const std::vector<pipeline::StageReport>& reps) {
    json out = json::array();
    for (const auto& r : reps) {
        out.push_back({{"stage", pipeline::to_string(r.stage)},
                       {"skipped", r.skipped},
                       {"seconds", r.seconds},
                       {"artifact", r.artifact.string()}});
    }
    std::cout << out.dump(2) << "\n";
}

json field_summary(const spgd::SeparatedSolution& sol, const oracle::MaterialPoint& mu) {
    const auto f = spgd::evaluate(sol, mu);
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    double mean = 0.0;
    for (double v : f) mean += v / static_cast<double>(f.size());
    return {{"mu1", mu.mu1}, {"mu2", mu.mu2}, {"min", *lo}, {"max", *hi}, {"mean", mean}};
}

int report(const std::string& command, const std::string& tag, const std::exception& e, int code) {
    std::cerr << "gpd " << command << ": " << tag << e.what() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative parametric design: offline stages and online workflows"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON document merged over the profile defaults")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Artifact directory")->capture_default_str();
    app.add_option("--profile", g.profile, "Configuration profile")
        ->check(CLI::IsMember({"desk", "paper"}))
        ->capture_default_str();
    app.add_flag("--force", g.force, "Rerun the requested stage even when cached (run-all: every stage)");
    app.add_flag("--quiet", g.quiet, "No progress lines on stderr");

    const std::vector<std::pair<const char*, Stage>> stage_cmds = {{"gen-data", Stage::data},
                                                                   {"fit-spgd", Stage::spgd},
                                                                   {"build-table", Stage::table},
                                                                   {"train-map", Stage::regressors},
                                                                   {"fit-gmm", Stage::gmm}};
    std::optional<Stage> stage;
    for (const auto& [name, s] : stage_cmds) {
        const Stage st = s;
        app.add_subcommand(name, std::string("Run the ") + pipeline::to_string(st) + " stage and its inputs")
            ->callback([&stage, st] { stage = st; });
    }
    std::string which;
    auto* train = app.add_subcommand("train-rrae", "Train one RRAE (and its inputs)");
    train->add_option("which", which, "geometry, spatial, m1 or m2")
        ->required()
        ->check(CLI::IsMember({"geometry", "spatial", "m1", "m2"}));
    auto* run_all = app.add_subcommand("run-all", "Run every stage and write the bundle");

    std::string image_path, save_path;
    double mu1 = -1.0, mu2 = -1.0;
    auto* recon = app.add_subcommand("reconstruct", "Workflow (i): surrogate for one geometry");
    recon->add_option("--image", image_path, "Square binary PGM at the bundle resolution")
        ->required()
        ->check(CLI::ExistingFile);
    recon->add_option("--mu1", mu1, "Matrix modulus (MPa) for the field summary");
    recon->add_option("--mu2", mu2, "Inclusion modulus (MPa) for the field summary");
    recon->add_option("--save", save_path, "Write the separated solution as a GPDC container");

    std::size_t n = 1;
    std::uint64_t seed = 0;
    std::string save_dir;
    auto* gen = app.add_subcommand("generate", "Workflow (ii): sample new designs");
    gen->add_option("--n", n, "Number of designs")->required();
    gen->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    gen->add_option("--save", save_dir, "Directory for design PGMs and designs.gpdc");

    std::size_t eval_n = 50;
    auto* eval = app.add_subcommand("eval", "Check both workflows on the current run; writes eval.json");
    eval->add_option("--n", eval_n, "Designs to generate")->capture_default_str();

    std::string host = "127.0.0.1", origin = "http://localhost:5173";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP service over the current bundle");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str()->check(CLI::Range(0, 65535));
    serve->add_option("--cors-origin", origin, "Allowed browser origin")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    std::optional<pipeline::Pipeline> pipe;
    try {
        pipe.emplace(make_pipeline(g));
    } catch (const std::exception& e) {
        return report(command, "config: ", e, kUsage);
    }
    auto& p = *pipe;
    try {
        if (stage) {
            print_reports(p.run(*stage));
        } else if (*train) {
            print_reports(p.run(pipeline::stage_for(pipeline::model_from_string(which))));
        } else if (*run_all) {
            print_reports(p.run_all());
        } else if (*recon) {
            const auto b = current_bundle(p);
            const auto img = microgen::read_pgm(image_path);
            const auto sol = pipeline::reconstruct_for_geometry(b, img);
            const oracle::MaterialPoint mu{mu1 < 0 ? 0.5 * (b.ranges.mu1_min + b.ranges.mu1_max) : mu1,
                                           mu2 < 0 ? 0.5 * (b.ranges.mu2_min + b.ranges.mu2_max) : mu2};
            b.ranges.check(mu);
            if (!save_path.empty()) {
                microgen::DatasetContainer c;
                spgd::put_solutions(c, "solution", {sol});
                microgen::write_dataset(c, save_path);
            }
            std::cout << json{{"alpha", pipeline::encode_image(b, img)}, {"field", field_summary(sol, mu)}}.dump(2) << "\n";
        } else if (*gen) {
            if (n == 0) throw ArgumentError("--n must be at least 1");
            const auto b = current_bundle(p);
            const auto designs = pipeline::generate_designs(b, n, seed);
            const oracle::MaterialPoint mid{0.5 * (b.ranges.mu1_min + b.ranges.mu1_max),
                                            0.5 * (b.ranges.mu2_min + b.ranges.mu2_max)};
            json out = json::array();
            for (const auto& d : designs) {
                out.push_back({{"alpha", d.alpha},
                               {"two_phase", pipeline::is_two_phase(d.image)},
                               {"volume_fraction", d.image.volume_fraction()},
                               {"probe_min", pipeline::probe_minimum(d.solution, b.ranges)},
                               {"field_at_center", field_summary(d.solution, mid)}});
            }
            if (!save_dir.empty()) {
                fs::create_directories(save_dir);
                microgen::DatasetContainer c;
                std::vector<double> alphas;
                std::vector<std::uint8_t> pixels;
                std::vector<spgd::SeparatedSolution> sols;
                for (std::size_t i = 0; i < designs.size(); ++i) {
                    char name[32];
                    std::snprintf(name, sizeof name, "design_%04zu.pgm", i);
                    microgen::write_pgm(designs[i].image, fs::path(save_dir) / name);
                    alphas.insert(alphas.end(), designs[i].alpha.begin(), designs[i].alpha.end());
                    pixels.insert(pixels.end(), designs[i].image.pixels.begin(), designs[i].image.pixels.end());
                    sols.push_back(designs[i].solution);
                }
                c.meta["designs"] = {{"n", n}, {"seed", seed}, {"bundle_hash", pipeline::bundle_hash(b)}};
                c.put<double>("alphas", {designs.size(), b.geometry.k()}, alphas);
                c.put<std::uint8_t>("images", {designs.size(), b.resolution, b.resolution}, pixels);
                spgd::put_solutions(c, "solutions", sols);
                microgen::write_dataset(c, fs::path(save_dir) / "designs.gpdc");
            }
            std::cout << out.dump(2) << "\n";
        } else if (*eval) {
            current_bundle(p);
            pipeline::EvalOptions opts;
            opts.generate_n = eval_n;
            const json r = pipeline::to_json(pipeline::evaluate(p, opts));
            std::ofstream(p.out_dir() / "eval.json") << r.dump(2) << "\n";
            std::cout << r.dump(2) << "\n";
        } else if (*serve) {
            service::ServiceOptions opts;
            opts.cors_origin = origin;
            opts.log_error = [](const std::string& line) { std::cerr << "gpd serve: error " << line << "\n"; };
            const service::Service svc(current_bundle(p), opts);
            std::cerr << "gpd serve: listening on http://" << host << ":" << port << " (bundle "
                      << svc.bundle_hash().substr(0, 12) << ")\n";
            service::serve(svc, host, port);
        }
    } catch (const pipeline::StageError& e) {
        return report(command, "", e, kStageFailure);
    } catch (const UsageError& e) {
        return report(command, "", e, kUsage);
    } catch (const Error& e) {
        return report(command, std::string(e.kind()) + " error: ", e, kFailure);
    } catch (const std::exception& e) {
        return report(command, "", e, kFailure);
    }
    return kOk;
}
