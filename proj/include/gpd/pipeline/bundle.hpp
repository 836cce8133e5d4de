#pragma once

#include <filesystem>
#include <string>

#include "gpd/genlab/genlab.hpp"
#include "gpd/latentmap/latentmap.hpp"
#include "gpd/microgen/container.hpp"
#include "gpd/oracle/oracle.hpp"
#include "gpd/rrae/rrae.hpp"
#include "gpd/spgd/curves.hpp"

namespace gpd::pipeline {

inline constexpr int kBundleFormat = 1;
inline constexpr const char* kVersion = "0.1.0";

/// Everything the two online workflows need.
struct ModelBundle {
    rrae::TrainedRRAE<float> geometry;
    rrae::TrainedRRAE<float> spatial;
    rrae::TrainedRRAE<float> m1;
    rrae::TrainedRRAE<float> m2;
    latentmap::RegressorSet regressors;
    latentmap::LatentTable table;
    genlab::GmmModel gmm;
    spgd::GlobalNormalization normalization;
    spgd::ParametricBasis basis1;
    spgd::ParametricBasis basis2;
    oracle::MaterialRanges ranges;
    oracle::OracleConfig oracle;
    std::size_t resolution = 0;
    std::string config_hash;

    /// ConsistencyError naming the first component whose widths or shapes
    /// break the latent chain.
    void validate() const;
};

microgen::DatasetContainer to_container(const ModelBundle& b);
ModelBundle from_container(const microgen::DatasetContainer& c);

void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
/// FormatError for unreadable or wrong-version files, ConsistencyError when
/// components disagree.
ModelBundle load_bundle(const std::filesystem::path& path);

/// SHA-256 of the serialized bundle.
std::string bundle_hash(const ModelBundle& b);

}  // namespace gpd::pipeline
