#include "gpd/pipeline/stages.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "gpd/pipeline/hash.hpp"
#include "gpd/pipeline/workflows.hpp"
#include "gpd/rng.hpp"

namespace gpd::pipeline {

namespace fs = std::filesystem;
using numkit::Batch;

namespace {

constexpr std::array<const char*, 10> kStageNames = {"data",  "spgd",       "rrae-geometry", "rrae-spatial", "rrae-m1",
                                                     "rrae-m2", "table", "regressors", "gmm", "bundle"};
constexpr std::array<const char*, 10> kArtifacts = {"data.gpdc",  "spgd.gpdc",       "rrae_geometry.gpdc",
                                                    "rrae_spatial.gpdc", "rrae_m1.gpdc", "rrae_m2.gpdc",
                                                    "table.gpdc", "regressors.gpdc", "gmm.gpdc", "bundle.gpdc"};

std::size_t idx(Stage s) { return static_cast<std::size_t>(s); }

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_hash(const fs::path& p) { return sha256_hex(microgen::read_file_bytes(p)); }

nlohmann::json ranges_json(const oracle::MaterialRanges& r) { return {r.mu1_min, r.mu1_max, r.mu2_min, r.mu2_max}; }

rrae::TrainedRRAE<float> read_model(const fs::path& p, Model m) { return rrae::get_model(microgen::read_dataset(p), to_string(m)); }

Batch<float> model_dataset(Model m, const DataArtifact& data, const SpgdArtifact& fits, std::size_t resolution) {
    switch (m) {
        case Model::geometry: return image_batch(data.images);
        case Model::spatial: return spatial_dataset(fits.solutions, fits.normalization, resolution);
        case Model::m1: return curve_dataset(fits.solutions, fits.normalization, spgd::Which::m1);
        case Model::m2: return curve_dataset(fits.solutions, fits.normalization, spgd::Which::m2);
    }
    throw ArgumentError("unknown model");
}

}  // namespace

const char* to_string(Stage s) { return kStageNames[idx(s)]; }

Stage stage_for(Model m) {
    switch (m) {
        case Model::geometry: return Stage::rrae_geometry;
        case Model::spatial: return Stage::rrae_spatial;
        case Model::m1: return Stage::rrae_m1;
        case Model::m2: return Stage::rrae_m2;
    }
    throw ArgumentError("unknown model");
}

StageError::StageError(Stage stage, const fs::path& artifact, const Error& cause)
    : Error(std::string("stage ") + to_string(stage) + " (" + artifact.string() + "): " + cause.kind() + " error: " +
            cause.what()),
      stage_(stage) {}

StageError::StageError(Stage stage, const fs::path& artifact, const std::string& what)
    : Error(std::string("stage ") + to_string(stage) + " (" + artifact.string() + "): " + what), stage_(stage) {}

std::vector<Stage> upstream(Stage s) {
    switch (s) {
        case Stage::data: return {};
        case Stage::spgd: return {Stage::data};
        case Stage::rrae_geometry: return {Stage::data};
        case Stage::rrae_spatial:
        case Stage::rrae_m1:
        case Stage::rrae_m2: return {Stage::spgd};
        case Stage::table:
            return {Stage::data, Stage::spgd, Stage::rrae_geometry, Stage::rrae_spatial, Stage::rrae_m1, Stage::rrae_m2};
        case Stage::regressors:
        case Stage::gmm: return {Stage::table};
        case Stage::bundle:
            return {Stage::spgd, Stage::rrae_geometry, Stage::rrae_spatial, Stage::rrae_m1, Stage::rrae_m2, Stage::table,
                    Stage::regressors, Stage::gmm};
    }
    return {};
}

nlohmann::json stage_config(const PipelineConfig& c, Stage s) {
    const nlohmann::json j = to_json(c);
    switch (s) {
        case Stage::data: return j.at("data");
        case Stage::spgd: return {{"oracle", j.at("oracle")}, {"ranges", j.at("ranges")}, {"spgd", j.at("spgd")}};
        case Stage::rrae_geometry: return j.at("rrae").at("geometry");
        case Stage::rrae_spatial: return j.at("rrae").at("spatial");
        case Stage::rrae_m1: return j.at("rrae").at("m1");
        case Stage::rrae_m2: return j.at("rrae").at("m2");
        case Stage::table: return nlohmann::json::object();
        case Stage::regressors: return j.at("regressors");
        case Stage::gmm: return j.at("gmm");
        // The bundle records the hash of the whole config.
        case Stage::bundle: return {{"config", j}, {"version", kVersion}};
    }
    return nullptr;
}

Pipeline::Pipeline(PipelineConfig config, fs::path out_dir, RunOptions options)
    : config_(std::move(config)), out_(std::move(out_dir)), options_(std::move(options)) {
    config_.validate();
}

fs::path Pipeline::artifact(Stage s) const { return out_ / kArtifacts[idx(s)]; }

std::string Pipeline::cache_key(Stage s) const {
    std::string text = std::string(to_string(s)) + "\n" + stage_config(config_, s).dump() + "\n";
    for (Stage u : upstream(s)) {
        const fs::path p = artifact(u);
        if (!fs::exists(p)) throw UsageError(std::string("upstream artifact missing: ") + p.string());
        text += std::string(to_string(u)) + " " + file_hash(p) + "\n";
    }
    return sha256_hex(text);
}

bool Pipeline::up_to_date(Stage s) const {
    const fs::path a = artifact(s);
    const fs::path k = a.string() + ".key";
    if (!fs::exists(a) || !fs::exists(k)) return false;
    for (Stage u : upstream(s))
        if (!fs::exists(artifact(u))) return false;
    // The sidecar holds the key and the artifact's own hash, so a damaged or
    // replaced artifact counts as stale.
    return read_text(k) == cache_key(s) + "\n" + file_hash(a) + "\n";
}

void Pipeline::log(const std::string& line) const {
    if (options_.log) options_.log(line);
}

std::vector<StageReport> Pipeline::run(Stage s) {
    std::array<bool, kStages.size()> needed{};
    needed[idx(s)] = true;
    // Stage order is topological, so one backward sweep closes the set.
    for (std::size_t i = idx(s) + 1; i-- > 0;) {
        if (!needed[i]) continue;
        for (Stage u : upstream(kStages[i])) needed[idx(u)] = true;
    }
    std::vector<StageReport> out;
    for (Stage u : kStages) {
        if (needed[idx(u)]) out.push_back(run_one(u, options_.force && u == s));
    }
    return out;
}

std::vector<StageReport> Pipeline::run_all() {
    std::vector<StageReport> out;
    for (Stage s : kStages) out.push_back(run_one(s, options_.force));
    return out;
}

StageReport Pipeline::run_one(Stage s, bool force) {
    StageReport rep{s, false, 0.0, artifact(s), ""};
    try {
        fs::create_directories(out_);
        rep.key = cache_key(s);
        if (!force && up_to_date(s)) {
            rep.skipped = true;
            log(std::string("[") + to_string(s) + "] up to date");
            return rep;
        }
        log(std::string("[") + to_string(s) + "] running");
        const auto t0 = std::chrono::steady_clock::now();
        execute(s);
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::string sidecar = rep.key + "\n" + file_hash(artifact(s)) + "\n";
        microgen::write_file_bytes(
            artifact(s).string() + ".key",
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(sidecar.data()), sidecar.size()));
        std::ostringstream msg;
        msg << "[" << to_string(s) << "] done in " << rep.seconds << " s";
        log(msg.str());
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(s, artifact(s), e);
    } catch (const std::exception& e) {
        throw StageError(s, artifact(s), e.what());
    }
    return rep;
}

void Pipeline::execute(Stage s) {
    switch (s) {
        case Stage::data: return stage_data();
        case Stage::spgd: return stage_spgd();
        case Stage::rrae_geometry: return stage_rrae(Model::geometry);
        case Stage::rrae_spatial: return stage_rrae(Model::spatial);
        case Stage::rrae_m1: return stage_rrae(Model::m1);
        case Stage::rrae_m2: return stage_rrae(Model::m2);
        case Stage::table: return stage_table();
        case Stage::regressors: return stage_regressors();
        case Stage::gmm: return stage_gmm();
        case Stage::bundle: return stage_bundle();
    }
}

void Pipeline::stage_data() {
    const auto& d = config_.data;
    auto specs = microgen::sample_inclusions(d.train_count, d.train_seed, d.mix, d.center_jitter);
    const auto test = microgen::sample_inclusions(d.test_count, d.test_seed, d.mix, d.center_jitter);
    specs.insert(specs.end(), test.begin(), test.end());
    std::vector<std::uint8_t> pixels;
    pixels.reserve(specs.size() * d.resolution * d.resolution);
    for (const auto& s : specs) {
        const auto img = microgen::rasterize(s, d.resolution);
        pixels.insert(pixels.end(), img.pixels.begin(), img.pixels.end());
    }
    microgen::DatasetContainer c;
    c.meta["data"] = {{"train_count", d.train_count}, {"test_count", d.test_count}, {"resolution", d.resolution},
                      {"specs", specs}};
    c.put<std::uint8_t>("images", {specs.size(), d.resolution, d.resolution}, pixels);
    microgen::write_dataset(c, artifact(Stage::data));
}

DataArtifact read_data(const fs::path& path) {
    const auto c = microgen::read_dataset(path);
    DataArtifact out;
    try {
        const auto& m = c.meta.at("data");
        out.train_count = m.at("train_count").get<std::size_t>();
        const auto specs = m.at("specs").get<std::vector<microgen::InclusionSpec>>();
        const auto& arr = c.at("images");
        if (arr.shape.size() != 3 || arr.shape[0] != specs.size()) throw FormatError("images array does not match the specs");
        const std::size_t r = arr.shape[1];
        const auto pixels = c.get<std::uint8_t>("images");
        for (std::size_t i = 0; i < specs.size(); ++i) {
            microgen::RVEImage img;
            img.resolution = r;
            img.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(i * r * r),
                              pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * r * r));
            img.spec = specs[i];
            out.images.push_back(std::move(img));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return out;
}

void Pipeline::stage_spgd() {
    const auto data = read_data(artifact(Stage::data));
    const auto grid = oracle::collocation_grid(config_.ranges);
    const auto fit_cfg = config_.fit_config();
    SpgdArtifact out;
    for (const auto& img : data.images) {
        const auto dist = oracle::signed_distance(img);
        std::vector<spgd::Sample> train, test;
        for (std::size_t i : grid.train_indices) train.push_back({grid.points[i], oracle::stress_field(dist, grid.points[i], config_.oracle)});
        for (std::size_t i : grid.test_indices) test.push_back({grid.points[i], oracle::stress_field(dist, grid.points[i], config_.oracle)});
        auto sol = spgd::fit_spgd(train, fit_cfg);
        sol.normalize();
        out.train_mape.push_back(spgd::mape(sol, train).percent);
        out.test_mape.push_back(spgd::mape(sol, test).percent);
        out.solutions.push_back(std::move(sol));
    }
    const std::vector<spgd::SeparatedSolution> train_sols(out.solutions.begin(),
                                                          out.solutions.begin() + static_cast<std::ptrdiff_t>(data.train_count));
    out.normalization = spgd::fit_normalization(train_sols);

    microgen::DatasetContainer c;
    c.meta["spgd_stage"] = {{"normalization", spgd::to_json(out.normalization)},
                            {"train_count", data.train_count},
                            {"ranges", ranges_json(config_.ranges)}};
    spgd::put_solutions(c, "solutions", out.solutions);
    c.put<double>("train_mape", {out.train_mape.size()}, out.train_mape);
    c.put<double>("test_mape", {out.test_mape.size()}, out.test_mape);
    microgen::write_dataset(c, artifact(Stage::spgd));
}

SpgdArtifact read_spgd(const fs::path& path) {
    const auto c = microgen::read_dataset(path);
    SpgdArtifact out;
    try {
        out.normalization = spgd::normalization_from_json(c.meta.at("spgd_stage").at("normalization"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    out.solutions = spgd::get_solutions(c, "solutions");
    out.train_mape = c.get<double>("train_mape");
    out.test_mape = c.get<double>("test_mape");
    return out;
}

Batch<float> rows(const Batch<float>& b, std::size_t first, std::size_t count) {
    if (first + count > b.rows) throw ArgumentError("rows: range exceeds the batch");
    Batch<float> out(count, b.shape);
    std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(first * b.sample_size()), count * b.sample_size(),
                out.values.begin());
    return out;
}

double heldout_loss(const rrae::TrainedRRAE<float>& model, const Batch<float>& data) {
    return rrae::rrae_loss(data, rrae::decode(model, rrae::encode(model, data)));
}

void Pipeline::stage_rrae(Model m) {
    const auto data = read_data(artifact(Stage::data));
    SpgdArtifact fits;
    if (m != Model::geometry) fits = read_spgd(artifact(Stage::spgd));
    const auto all = model_dataset(m, data, fits, config_.data.resolution);
    const std::size_t n = data.train_count;
    const auto train = rows(all, 0, n);
    const auto test = rows(all, n, all.rows - n);

    rrae::TrainOptions opts;
    const std::uint64_t total = config_.model(m).schedule.total_steps();
    const std::uint64_t every = std::max<std::uint64_t>(1, total / 10);
    opts.on_step = [&](const rrae::StepInfo& s) {
        if ((s.step + 1) % every == 0 || s.step + 1 == s.total) {
            std::ostringstream msg;
            msg << "[" << to_string(stage_for(m)) << "] step " << s.step + 1 << "/" << s.total << " loss " << s.loss;
            log(msg.str());
        }
    };
    const auto model = rrae::train_rrae(train, config_.model(m), opts);
    microgen::DatasetContainer c;
    rrae::put_model(c, to_string(m), model);
    c.meta[std::string(to_string(m)) + "_eval"] = {{"train_loss", model.final_loss},
                                                   {"test_loss", test.rows ? heldout_loss(model, test) : 0.0}};
    microgen::write_dataset(c, artifact(stage_for(m)));
}

void Pipeline::stage_table() {
    const auto data = read_data(artifact(Stage::data));
    const auto fits = read_spgd(artifact(Stage::spgd));
    const auto g = read_model(artifact(Stage::rrae_geometry), Model::geometry);
    const auto s = read_model(artifact(Stage::rrae_spatial), Model::spatial);
    const auto a = read_model(artifact(Stage::rrae_m1), Model::m1);
    const auto b = read_model(artifact(Stage::rrae_m2), Model::m2);
    const auto r = config_.data.resolution;
    const auto t = latentmap::build_latent_table(
        g, s, a, b, model_dataset(Model::geometry, data, fits, r), model_dataset(Model::spatial, data, fits, r),
        model_dataset(Model::m1, data, fits, r), model_dataset(Model::m2, data, fits, r), data.train_count);
    microgen::DatasetContainer c;
    latentmap::put_table(c, "table", t);
    microgen::write_dataset(c, artifact(Stage::table));
}

void Pipeline::stage_regressors() {
    const auto t = latentmap::get_table(microgen::read_dataset(artifact(Stage::table)), "table");
    const auto reg = latentmap::train_regressors(t, config_.regressors);
    // Held-out MAE in normalized units, one value per map.
    nlohmann::json eval = nlohmann::json::object();
    const std::size_t n = t.train_count, m = t.rows() - n;
    if (m > 0) {
        const auto tail = [&](const numkit::Matrix& x) {
            return numkit::Matrix(m, x.cols(), std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(n * x.cols()), x.data().end()));
        };
        const auto a = t.alpha_norm.normalize(tail(t.alpha));
        const auto mae = [&](const latentmap::Regressor& r, const latentmap::ZScore& z, const numkit::Matrix& y) {
            const auto p = latentmap::predict_normalized(r, a);
            const auto q = z.normalize(tail(y));
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.data()[i] - q.data()[i]);
            return s / static_cast<double>(p.size());
        };
        eval = {{"map_x", mae(reg.map_x, t.gamma_x_norm, t.gamma_x)},
                {"map_1", mae(reg.map_1, t.gamma_1_norm, t.gamma_1)},
                {"map_2", mae(reg.map_2, t.gamma_2_norm, t.gamma_2)}};
    }
    microgen::DatasetContainer c;
    latentmap::put_regressors(c, "regressors", reg);
    c.meta["regressors_eval"] = {{"test_mae", eval}};
    microgen::write_dataset(c, artifact(Stage::regressors));
}

void Pipeline::stage_gmm() {
    const auto t = latentmap::get_table(microgen::read_dataset(artifact(Stage::table)), "table");
    const numkit::Matrix train(t.train_count, t.alpha.cols(),
                               std::vector<double>(t.alpha.data().begin(),
                                                   t.alpha.data().begin() + static_cast<std::ptrdiff_t>(t.train_count * t.alpha.cols())));
    const auto fit = genlab::fit_gmm(train, config_.gmm, config_.gmm_seed);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& r : fit.candidates) {
        cands.push_back({{"k", r.k}, {"fitted_k", r.fitted_k}, {"bic", r.bic}, {"log_likelihood", r.log_likelihood},
                         {"failed", r.failed}, {"error", r.error}});
    }
    microgen::DatasetContainer c;
    genlab::put_gmm(c, "gmm", fit.model);
    c.meta["gmm_candidates"] = cands;
    microgen::write_dataset(c, artifact(Stage::gmm));
}

void Pipeline::stage_bundle() {
    ModelBundle b;
    b.geometry = read_model(artifact(Stage::rrae_geometry), Model::geometry);
    b.spatial = read_model(artifact(Stage::rrae_spatial), Model::spatial);
    b.m1 = read_model(artifact(Stage::rrae_m1), Model::m1);
    b.m2 = read_model(artifact(Stage::rrae_m2), Model::m2);
    b.regressors = latentmap::get_regressors(microgen::read_dataset(artifact(Stage::regressors)), "regressors");
    b.table = latentmap::get_table(microgen::read_dataset(artifact(Stage::table)), "table");
    b.gmm = genlab::get_gmm(microgen::read_dataset(artifact(Stage::gmm)), "gmm");
    const auto fits = read_spgd(artifact(Stage::spgd));
    b.normalization = fits.normalization;
    b.basis1 = fits.solutions.front().basis1;
    b.basis2 = fits.solutions.front().basis2;
    b.ranges = config_.ranges;
    b.oracle = config_.oracle;
    b.resolution = config_.data.resolution;
    b.config_hash = sha256_hex(to_json(config_).dump());
    save_bundle(b, artifact(Stage::bundle));
}

ModelBundle Pipeline::load_bundle() const { return pipeline::load_bundle(artifact(Stage::bundle)); }

}  // namespace gpd::pipeline
