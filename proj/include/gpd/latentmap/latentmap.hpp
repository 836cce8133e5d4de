#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpd/microgen/container.hpp"
#include "gpd/numkit/matrix.hpp"
#include "gpd/numkit/network.hpp"
#include "gpd/rrae/rrae.hpp"

namespace gpd::latentmap {

using numkit::Matrix;

/// Per-column z-score; std is floored at 1e-8.
struct ZScore {
    std::vector<double> mean;
    std::vector<double> std;

    static ZScore fit(const Matrix& rows, std::size_t count);
    Matrix normalize(const Matrix& rows) const;
    Matrix denormalize(const Matrix& rows) const;
    std::vector<double> normalize(std::span<const double> row) const;
    std::vector<double> denormalize(std::span<const double> row) const;
    std::size_t width() const { return mean.size(); }
};

/// Latent coefficients of every sample, rows ordered train first. The
/// normalization statistics come from the first `train_count` rows only.
struct LatentTable {
    Matrix alpha;
    Matrix gamma_x;
    Matrix gamma_1;
    Matrix gamma_2;
    std::size_t train_count = 0;
    ZScore alpha_norm;
    ZScore gamma_x_norm;
    ZScore gamma_1_norm;
    ZScore gamma_2_norm;
    std::string stats_source = "train";

    std::size_t rows() const { return alpha.rows(); }
};

LatentTable make_latent_table(Matrix alpha, Matrix gamma_x, Matrix gamma_1, Matrix gamma_2, std::size_t train_count);

/// Encodes each dataset with its model. ArgumentError naming the model when
/// shapes disagree.
LatentTable build_latent_table(const rrae::TrainedRRAE<float>& geometry, const rrae::TrainedRRAE<float>& spatial,
                               const rrae::TrainedRRAE<float>& m1, const rrae::TrainedRRAE<float>& m2,
                               const numkit::Batch<float>& geometry_data, const numkit::Batch<float>& spatial_data,
                               const numkit::Batch<float>& m1_data, const numkit::Batch<float>& m2_data,
                               std::size_t train_count);

struct RegressorConfig {
    std::vector<std::size_t> hidden;
    std::size_t epochs = 0;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
};

struct RegressorSetConfig {
    RegressorConfig map_x{{128, 128, 128}, 3000};
    RegressorConfig map_1{{64, 64}, 2000};
    RegressorConfig map_2{{64, 64}, 2000};
    std::uint64_t seed = 0;

    /// Epoch counts divided by `divisor` (at least one epoch).
    RegressorSetConfig shortened(std::size_t divisor) const;
};

struct Regressor {
    numkit::NetworkSpec spec;
    std::vector<float> params;
    std::size_t epochs = 0;
    std::vector<double> loss_history;  // normalized-space MAE per epoch
    double train_mae = 0.0;            // normalized-space MAE after training
    double max_sample_mae = 0.0;       // worst training row, same units
};

struct RegressorSet {
    Regressor map_x;
    Regressor map_1;
    Regressor map_2;
};

/// Relu hidden layers, linear output.
numkit::NetworkSpec regressor_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out);

/// Adam on mean absolute error over shuffled minibatches (last one partial).
/// ArgumentError below 32 rows; TrainingError on a non-finite loss.
Regressor train_regressor(const Matrix& inputs, const Matrix& targets, const RegressorConfig& cfg, std::uint64_t seed);

/// Trains the three maps on the normalized training rows.
RegressorSet train_regressors(const LatentTable& table, const RegressorSetConfig& cfg);

/// Raw network output for normalized inputs.
Matrix predict_normalized(const Regressor& reg, const Matrix& inputs);

struct Gammas {
    std::vector<double> x;
    std::vector<double> one;
    std::vector<double> two;
};

/// Normalize alpha, run the three maps, denormalize.
Gammas predict_gammas(const RegressorSet& reg, const LatentTable& stats, std::span<const double> alpha);

void put_regressors(microgen::DatasetContainer& c, const std::string& prefix, const RegressorSet& reg);
RegressorSet get_regressors(const microgen::DatasetContainer& c, const std::string& prefix);
void put_table(microgen::DatasetContainer& c, const std::string& prefix, const LatentTable& t);
LatentTable get_table(const microgen::DatasetContainer& c, const std::string& prefix);

}  // namespace gpd::latentmap
