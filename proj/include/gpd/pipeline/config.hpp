#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "gpd/genlab/genlab.hpp"
#include "gpd/latentmap/latentmap.hpp"
#include "gpd/microgen/inclusion.hpp"
#include "gpd/oracle/oracle.hpp"
#include "gpd/rrae/config.hpp"
#include "gpd/spgd/spgd.hpp"
#include "json.hpp"

namespace gpd::pipeline {

struct DataConfig {
    std::size_t train_count = 64;
    std::size_t test_count = 16;
    std::size_t resolution = 64;
    double center_jitter = 0.0;
    microgen::ClassMix mix;
    std::uint64_t train_seed = 101;
    std::uint64_t test_seed = 202;
};

/// Index order of `PipelineConfig::rrae`.
enum class Model { geometry = 0, spatial = 1, m1 = 2, m2 = 3 };
inline constexpr std::array<Model, 4> kModels = {Model::geometry, Model::spatial, Model::m1, Model::m2};
const char* to_string(Model m);
Model model_from_string(const std::string& s);

struct PipelineConfig {
    std::string profile = "desk";
    DataConfig data;
    oracle::OracleConfig oracle;
    oracle::MaterialRanges ranges;
    std::size_t spgd_max_sweeps = 50;
    double spgd_tolerance = 1e-8;
    double spgd_ridge = 1e-8;
    std::size_t basis_size = 8;
    spgd::BasisKind basis = spgd::BasisKind::gaussian_kriging;
    std::array<rrae::RRAEConfig, 4> rrae;
    latentmap::RegressorSetConfig regressors;
    genlab::GmmConfig gmm;
    std::uint64_t gmm_seed = 303;

    const rrae::RRAEConfig& model(Model m) const { return rrae[static_cast<std::size_t>(m)]; }
    spgd::FitConfig fit_config() const;
    /// Throws ArgumentError naming the offending section.
    void validate() const;
};

/// "desk": 64/16 samples at 64x64, schedules and epochs divided by 10.
/// "paper": 500/99 samples at 148x148, full schedules. A nonzero
/// `resolution` replaces the profile's and rebuilds the architectures.
PipelineConfig profile_config(const std::string& profile, std::size_t resolution = 0);

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig config_from_json(const nlohmann::json& j);

/// Profile defaults with `overrides` merged in (RFC 7386 merge patch).
PipelineConfig resolve_config(const std::string& profile, const nlohmann::json& overrides = nlohmann::json::object());

/// Reads a JSON document; FormatError naming the path on parse failure.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace gpd::pipeline
