#pragma once

#include <cstdint>
#include <vector>

#include "gpd/pipeline/stages.hpp"
#include "json.hpp"

namespace gpd::pipeline {

struct EvalOptions {
    std::size_t consistency_samples = 8;
    std::size_t generate_n = 50;
    std::uint64_t generate_seed = 7;
    std::uint64_t disjoint_seed = 505;
    double bound_slack = 3.0;
};

/// One training geometry through workflow (i). All values are grid MAPEs in
/// percent: `reconstruction` assembles the true latents, `regression`
/// compares predicted to true latents after assembly, `end_to_end` is the
/// full workflow against the fitted sPGD solution.
struct ConsistencySample {
    std::size_t index = 0;
    double reconstruction = 0.0;
    double regression = 0.0;
    double end_to_end = 0.0;
    double bound = 0.0;
    bool pass = false;
};

struct GenerationCheck {
    std::size_t n = 0;
    std::size_t two_phase = 0;
    std::size_t positive = 0;   // designs whose probe minimum is > 0
    double min_probe = 0.0;
    std::size_t latents_outside = 0;  // beyond the 3-std inflated training box
    double distance_generated = 0.0;
    double distance_disjoint = 0.0;
};

struct EvalReport {
    nlohmann::json losses;  // per model: train/test reconstruction loss
    double spgd_train_mape = 0.0;  // over the 32 fitting points, mean of all samples
    double spgd_test_mape = 0.0;   // over the 8 held-out points
    nlohmann::json regressor_test_mae;
    std::vector<ConsistencySample> consistency;
    GenerationCheck generation;

    bool consistency_ok() const;
    bool generation_ok() const;
};

/// Reads the artifacts of a completed run and checks both workflows.
EvalReport evaluate(const Pipeline& p, const EvalOptions& opts = {});

nlohmann::json to_json(const EvalReport& r);

/// Plus-shaped inclusions (two perpendicular bars through one center). Their
/// geometry lies outside the four training classes.
std::vector<microgen::RVEImage> cross_images(std::size_t n, std::size_t resolution, std::uint64_t seed);

}  // namespace gpd::pipeline
