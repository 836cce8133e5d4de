#include "gpd/pipeline/config.hpp"

#include <fstream>

#include "gpd/errors.hpp"

namespace gpd::pipeline {

namespace {

constexpr std::array<const char*, 4> kModelNames = {"geometry", "spatial", "m1", "m2"};
constexpr std::array<rrae::Preset, 4> kPresets = {rrae::Preset::geometry, rrae::Preset::spatial, rrae::Preset::m1,
                                                  rrae::Preset::m2};
constexpr std::uint64_t kModelSeedBase = 11;

nlohmann::json regressor_json(const latentmap::RegressorConfig& r) {
    return {{"hidden", r.hidden}, {"epochs", r.epochs}, {"batch_size", r.batch_size}, {"learning_rate", r.learning_rate}};
}

latentmap::RegressorConfig regressor_from_json(const nlohmann::json& j) {
    latentmap::RegressorConfig r;
    r.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.learning_rate = j.at("learning_rate").get<double>();
    return r;
}

}  // namespace

const char* to_string(Model m) { return kModelNames[static_cast<std::size_t>(m)]; }

Model model_from_string(const std::string& s) {
    for (Model m : kModels)
        if (s == to_string(m)) return m;
    throw ArgumentError("unknown model '" + s + "' (expected geometry, spatial, m1 or m2)");
}

spgd::FitConfig PipelineConfig::fit_config() const {
    spgd::FitConfig f;
    f.max_sweeps = spgd_max_sweeps;
    f.tolerance = spgd_tolerance;
    f.ridge = spgd_ridge;
    f.basis = basis;
    f.basis_size = basis_size;
    f.ranges = ranges;
    return f;
}

void PipelineConfig::validate() const {
    const auto section = [](const char* name, const auto& fn) {
        try {
            fn();
        } catch (const Error& e) {
            throw ArgumentError(std::string("config.") + name + ": " + e.what());
        }
    };
    section("data", [&] {
        if (data.train_count == 0 || data.test_count == 0) throw ArgumentError("train and test counts must be positive");
        if (data.resolution < 16 || data.resolution % 4 != 0) {
            throw ArgumentError("resolution must be a multiple of 4, at least 16");
        }
    });
    section("oracle", [&] { oracle.validate(); });
    section("ranges", [&] {
        if (!(ranges.mu1_min > 0 && ranges.mu1_min < ranges.mu1_max && ranges.mu2_min > 0 && ranges.mu2_min < ranges.mu2_max)) {
            throw ArgumentError("material ranges must be positive and ordered");
        }
    });
    section("spgd", [&] {
        if (basis_size < 2 || spgd_max_sweeps == 0) throw ArgumentError("basis_size >= 2 and max_sweeps >= 1 required");
    });
    for (Model m : kModels) {
        section(to_string(m), [&] {
            const auto& c = model(m);
            c.validate(data.train_count);
        });
    }
    const auto& g = model(Model::geometry);
    const auto& s = model(Model::spatial);
    const numkit::Shape image{1, data.resolution, data.resolution};
    const numkit::Shape fields{spgd::kModes, data.resolution, data.resolution};
    if (!(g.input_shape() == image)) throw ArgumentError("config.geometry: input shape does not match the resolution");
    if (!(s.input_shape() == fields)) throw ArgumentError("config.spatial: input shape must be 3 x resolution^2");
    for (Model m : {Model::m1, Model::m2}) {
        if (model(m).input_shape().size() != rrae::kCurveInput) {
            throw ArgumentError(std::string("config.") + to_string(m) + ": curve input must have 3000 values");
        }
    }
    section("gmm", [&] { gmm.validate(); });
    if (data.train_count < 2 * gmm.k_max) {
        throw ArgumentError("config.gmm: k_max " + std::to_string(gmm.k_max) + " needs at least " +
                            std::to_string(2 * gmm.k_max) + " training samples");
    }
}

PipelineConfig profile_config(const std::string& profile, std::size_t resolution) {
    PipelineConfig c;
    c.profile = profile;
    std::uint64_t divisor = 10;
    if (profile == "desk") {
        c.data.train_count = 64;
        c.data.test_count = 16;
        c.data.resolution = 64;
        c.regressors = latentmap::RegressorSetConfig{}.shortened(10);
    } else if (profile == "paper") {
        c.data.train_count = 500;
        c.data.test_count = 99;
        c.data.resolution = 148;
        divisor = 1;
    } else {
        throw ArgumentError("unknown profile '" + profile + "' (expected desk or paper)");
    }
    if (resolution != 0) c.data.resolution = resolution;
    c.regressors.seed = 404;
    for (std::size_t i = 0; i < 4; ++i) {
        c.rrae[i] = rrae::preset(kPresets[i], c.data.resolution, kModelSeedBase + i, divisor);
    }
    return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json rr = nlohmann::json::object();
    for (Model m : kModels) rr[to_string(m)] = rrae::to_json(c.model(m));
    return {
        {"profile", c.profile},
        {"data",
         {{"train_count", c.data.train_count},
          {"test_count", c.data.test_count},
          {"resolution", c.data.resolution},
          {"center_jitter", c.data.center_jitter},
          {"mix", {c.data.mix.circle, c.data.mix.ellipse, c.data.mix.square, c.data.mix.rectangle}},
          {"train_seed", c.data.train_seed},
          {"test_seed", c.data.test_seed}}},
        {"oracle",
         {{"applied_strain", c.oracle.applied_strain},
          {"boundary_length", c.oracle.boundary_length},
          {"amplitude", c.oracle.amplitude},
          {"nonseparable_weight", c.oracle.nonseparable_weight},
          {"poisson_matrix", c.oracle.poisson_matrix},
          {"poisson_inclusion", c.oracle.poisson_inclusion}}},
        {"ranges", {c.ranges.mu1_min, c.ranges.mu1_max, c.ranges.mu2_min, c.ranges.mu2_max}},
        {"spgd",
         {{"max_sweeps", c.spgd_max_sweeps},
          {"tolerance", c.spgd_tolerance},
          {"ridge", c.spgd_ridge},
          {"basis_size", c.basis_size},
          {"basis", spgd::to_string(c.basis)}}},
        {"rrae", rr},
        {"regressors",
         {{"map_x", regressor_json(c.regressors.map_x)},
          {"map_1", regressor_json(c.regressors.map_1)},
          {"map_2", regressor_json(c.regressors.map_2)},
          {"seed", c.regressors.seed}}},
        {"gmm",
         {{"k_min", c.gmm.k_min},
          {"k_max", c.gmm.k_max},
          {"restarts", c.gmm.restarts},
          {"tolerance", c.gmm.tolerance},
          {"max_iterations", c.gmm.max_iterations},
          {"ridge", c.gmm.ridge},
          {"seed", c.gmm_seed}}},
    };
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    try {
        PipelineConfig c;
        c.profile = j.at("profile").get<std::string>();
        const auto& d = j.at("data");
        c.data.train_count = d.at("train_count").get<std::size_t>();
        c.data.test_count = d.at("test_count").get<std::size_t>();
        c.data.resolution = d.at("resolution").get<std::size_t>();
        c.data.center_jitter = d.at("center_jitter").get<double>();
        const auto mix = d.at("mix").get<std::array<double, 4>>();
        c.data.mix = {mix[0], mix[1], mix[2], mix[3]};
        c.data.train_seed = d.at("train_seed").get<std::uint64_t>();
        c.data.test_seed = d.at("test_seed").get<std::uint64_t>();
        const auto& o = j.at("oracle");
        c.oracle.applied_strain = o.at("applied_strain").get<double>();
        c.oracle.boundary_length = o.at("boundary_length").get<double>();
        c.oracle.amplitude = o.at("amplitude").get<double>();
        c.oracle.nonseparable_weight = o.at("nonseparable_weight").get<double>();
        c.oracle.poisson_matrix = o.at("poisson_matrix").get<double>();
        c.oracle.poisson_inclusion = o.at("poisson_inclusion").get<double>();
        const auto r = j.at("ranges").get<std::array<double, 4>>();
        c.ranges = {r[0], r[1], r[2], r[3]};
        const auto& s = j.at("spgd");
        c.spgd_max_sweeps = s.at("max_sweeps").get<std::size_t>();
        c.spgd_tolerance = s.at("tolerance").get<double>();
        c.spgd_ridge = s.at("ridge").get<double>();
        c.basis_size = s.at("basis_size").get<std::size_t>();
        c.basis = spgd::basis_kind_from_string(s.at("basis").get<std::string>());
        for (Model m : kModels) c.rrae[static_cast<std::size_t>(m)] = rrae::config_from_json(j.at("rrae").at(to_string(m)));
        const auto& g = j.at("regressors");
        c.regressors.map_x = regressor_from_json(g.at("map_x"));
        c.regressors.map_1 = regressor_from_json(g.at("map_1"));
        c.regressors.map_2 = regressor_from_json(g.at("map_2"));
        c.regressors.seed = g.at("seed").get<std::uint64_t>();
        const auto& m = j.at("gmm");
        c.gmm.k_min = m.at("k_min").get<std::size_t>();
        c.gmm.k_max = m.at("k_max").get<std::size_t>();
        c.gmm.restarts = m.at("restarts").get<std::size_t>();
        c.gmm.tolerance = m.at("tolerance").get<double>();
        c.gmm.max_iterations = m.at("max_iterations").get<std::size_t>();
        c.gmm.ridge = m.at("ridge").get<double>();
        c.gmm_seed = m.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("pipeline config: ") + e.what());
    }
}

PipelineConfig resolve_config(const std::string& profile, const nlohmann::json& overrides) {
    if (!overrides.is_object()) throw FormatError("pipeline config overrides must be a JSON object");
    // Architectures depend on the resolution, so rebuild them before merging.
    std::size_t resolution = 0;
    if (overrides.contains("data") && overrides["data"].is_object() && overrides["data"].contains("resolution")) {
        const auto& r = overrides["data"]["resolution"];
        if (!r.is_number_unsigned()) throw FormatError("config.data.resolution must be a positive integer");
        resolution = r.get<std::size_t>();
    }
    nlohmann::json j = to_json(profile_config(profile, resolution));
    j.merge_patch(overrides);
    PipelineConfig c = config_from_json(j);
    c.validate();
    return c;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("config '" + path.string() + "': " + e.what());
    }
}

}  // namespace gpd::pipeline
