#pragma once

#include <filesystem>
#include <string>

#include "gpd/pipeline/config.hpp"

namespace gpd::testing {

/// Seconds-scale pipeline: 40/8 samples at 16x16, a few dozen steps per
/// model, small regressors and K up to 3.
inline pipeline::PipelineConfig tiny_config() {
    auto c = pipeline::profile_config("desk", 16);
    c.profile = "tiny";
    c.data.train_count = 40;
    c.data.test_count = 8;
    for (auto& m : c.rrae) m.schedule = numkit::LrSchedule{{{30, 1e-3}, {10, 1e-4}}};
    c.regressors.map_x = {{32, 32}, 20};
    c.regressors.map_1 = {{16}, 20};
    c.regressors.map_2 = {{16}, 20};
    c.gmm.k_max = 3;
    c.gmm.restarts = 2;
    c.validate();
    return c;
}

/// Fresh directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("gpd_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace gpd::testing
