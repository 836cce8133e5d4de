#pragma once

#include <cstdint>
#include <string>

#include "gpd/numkit/network.hpp"
#include "gpd/numkit/optimizer.hpp"
#include "json.hpp"

namespace gpd::rrae {

enum class Preset { geometry, spatial, m1, m2 };

const char* to_string(Preset p);
Preset preset_from_string(const std::string& s);

struct RRAEConfig {
    std::string name;
    numkit::NetworkSpec encoder;
    numkit::NetworkSpec decoder;
    std::size_t latent_dim = 0;
    std::size_t k_max = 0;
    std::size_t batch_size = 20;
    numkit::LrSchedule schedule;
    numkit::OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    bool clamp_output = false;  // clamp decoder output to [0, 1]

    numkit::Shape input_shape() const { return encoder.input; }
    /// Structural checks, and batch_size against the dataset when given.
    void validate(std::size_t dataset_size = 0) const;
};

/// Reference architectures, parameterized by input resolution (a multiple of 4).
numkit::NetworkSpec geometry_encoder(std::size_t resolution, std::size_t latent_dim);
numkit::NetworkSpec geometry_decoder(std::size_t resolution, std::size_t latent_dim);
numkit::NetworkSpec spatial_encoder(std::size_t resolution, std::size_t latent_dim);
numkit::NetworkSpec spatial_decoder(std::size_t resolution, std::size_t latent_dim);
numkit::NetworkSpec curve_encoder(std::size_t input, std::size_t latent_dim);
numkit::NetworkSpec curve_decoder(std::size_t input, std::size_t latent_dim);

inline constexpr std::size_t kDecoderSeedChannels = 32;
inline constexpr std::size_t kCurveInput = 3000;  // three modes x 1000 samples

/// Reference hyperparameters. `schedule_divisor` shortens every phase (10 for
/// desk runs, 1 for the paper profile).
RRAEConfig preset(Preset p, std::size_t resolution, std::uint64_t seed, std::uint64_t schedule_divisor = 1);

nlohmann::json to_json(const RRAEConfig& c);
RRAEConfig config_from_json(const nlohmann::json& j);

}  // namespace gpd::rrae
