#pragma once

#include <span>
#include <vector>

#include "gpd/microgen/inclusion.hpp"
#include "gpd/numkit/network.hpp"
#include "gpd/pipeline/bundle.hpp"

namespace gpd::pipeline {

/// Images as a (N, 1, R, R) batch of 0/1 values.
numkit::Batch<float> image_batch(const std::vector<microgen::RVEImage>& images);

/// Spatial modes as (N, 3, R, R), each channel mapped by its field map.
numkit::Batch<float> spatial_dataset(const std::vector<spgd::SeparatedSolution>& sols,
                                     const spgd::GlobalNormalization& norm, std::size_t resolution);

/// The three normalized curves of one family concatenated, (N, 3000).
numkit::Batch<float> curve_dataset(const std::vector<spgd::SeparatedSolution>& sols,
                                   const spgd::GlobalNormalization& norm, spgd::Which which);

/// Geometry latent of one image. ArgumentError on a resolution mismatch.
std::vector<double> encode_image(const ModelBundle& b, const microgen::RVEImage& img);

/// Decodes the three mode latents and rebuilds a separated solution:
/// fields and curves are denormalized, curves refitted onto the bases.
spgd::SeparatedSolution assemble(const ModelBundle& b, const latentmap::Gammas& g);

/// Workflow (i) from a latent: regressors, decoders, assembly.
spgd::SeparatedSolution solution_for_alpha(const ModelBundle& b, std::span<const double> alpha);

/// Workflow (i): encode the raw input image, then solution_for_alpha.
spgd::SeparatedSolution reconstruct_for_geometry(const ModelBundle& b, const microgen::RVEImage& img);

/// Decoded geometry (clamped) and its 0.5-threshold binary image.
struct DecodedImage {
    std::vector<float> values;
    microgen::RVEImage binary;
};
DecodedImage decode_image(const ModelBundle& b, std::span<const double> alpha);

struct Design {
    std::vector<double> alpha;
    microgen::RVEImage image;
    spgd::SeparatedSolution solution;
};

/// Workflow (ii): GMM samples, decoded geometries, predicted solutions.
std::vector<Design> generate_designs(const ModelBundle& b, std::size_t n, std::uint64_t seed);

/// Both phases present.
bool is_two_phase(const microgen::RVEImage& img);

/// Smallest field value over an n x n lattice spanning the parameter box.
double probe_minimum(const spgd::SeparatedSolution& sol, const oracle::MaterialRanges& ranges, std::size_t n = 5);

/// MAPE of `pred` against `ref` over every collocation point.
double grid_mape(const spgd::SeparatedSolution& pred, const spgd::SeparatedSolution& ref,
                 const oracle::CollocationGrid& grid);

/// Per-component p1/p99 of the training-row latents.
struct LatentBounds {
    std::vector<double> p1;
    std::vector<double> p99;
};
LatentBounds latent_bounds(const ModelBundle& b);

}  // namespace gpd::pipeline
