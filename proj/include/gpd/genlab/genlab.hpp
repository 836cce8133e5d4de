#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gpd/microgen/container.hpp"
#include "gpd/microgen/inclusion.hpp"
#include "gpd/numkit/matrix.hpp"

namespace gpd::genlab {

using numkit::Matrix;

struct GmmModel {
    std::vector<double> weights;
    Matrix means;                      // K x d
    std::vector<Matrix> covariances;   // K of d x d, ridge included
    double log_likelihood = 0.0;       // total over the fit data
    double bic = 0.0;
    std::vector<double> ll_history;    // mean log-likelihood per EM iteration
    std::size_t iterations = 0;
    std::size_t pruned = 0;            // components dropped during EM
    bool monotone = true;              // no EM step lowered the likelihood

    std::size_t k() const { return weights.size(); }
    std::size_t dim() const { return means.cols(); }
    /// Free parameters: K-1 weights, K*d means, K*d(d+1)/2 covariances.
    std::size_t parameter_count() const;
};

struct GmmConfig {
    std::size_t k_min = 1;
    std::size_t k_max = 30;
    std::size_t restarts = 5;
    double tolerance = 1e-6;  // on the mean per-sample log-likelihood
    std::size_t max_iterations = 500;
    double ridge = 1e-6;

    void validate() const;
};

struct CandidateReport {
    std::size_t k = 0;       // requested
    std::size_t fitted_k = 0;
    double log_likelihood = 0.0;
    double bic = 0.0;
    bool failed = false;
    std::string error;
};

struct GmmFit {
    GmmModel model;
    std::vector<CandidateReport> candidates;
};

/// Best of `restarts` EM runs with K components, ranked by final
/// log-likelihood. FitError when every restart fails.
GmmModel fit_gmm_k(const Matrix& x, std::size_t k, const GmmConfig& cfg, std::uint64_t seed);

/// Fits every K in [k_min, k_max] and keeps the lowest BIC. ArgumentError
/// with fewer than 2*k_max rows; FitError when no K can be fitted.
GmmFit fit_gmm(const Matrix& x, const GmmConfig& cfg, std::uint64_t seed);

/// Per-row log densities.
std::vector<double> log_density(const GmmModel& m, const Matrix& x);
double total_log_likelihood(const GmmModel& m, const Matrix& x);

/// Ancestral sampling: component by weight, then mean + L z.
Matrix sample_latents(const GmmModel& m, std::size_t n, std::uint64_t seed);

struct BoundsReport {
    std::size_t outside = 0;
    double fraction_inside = 1.0;
};

/// Rows of `samples` outside the bounding box of `reference` inflated by
/// `stds` reference standard deviations per axis.
BoundsReport latent_bounds_check(const Matrix& samples, const Matrix& reference, double stds = 3.0);

void put_gmm(microgen::DatasetContainer& c, const std::string& prefix, const GmmModel& m);
GmmModel get_gmm(const microgen::DatasetContainer& c, const std::string& prefix);

/// Volume fraction, perimeter density, aspect ratio of the second-moment
/// ellipse, cos 2theta, sin 2theta.
using Descriptor = std::array<double, 5>;

/// Pixels are inclusion where value >= 0.5.
Descriptor describe(std::span<const std::uint8_t> mask, std::size_t resolution);
Descriptor describe(const microgen::RVEImage& img);

/// Frechet distance between Gaussian fits of the two descriptor sets.
/// ArgumentError on an empty set.
double descriptor_distance(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b);
double descriptor_distance(const std::vector<microgen::RVEImage>& a, const std::vector<microgen::RVEImage>& b);

/// Recovers a clean inclusion from a (possibly noisy) binary image: moment
/// fit for center, axes and orientation, ellipse vs rectangle chosen by pixel
/// agreement, near-equal axes snapped to circle/square, then clamped into
/// the valid ranges. GenerationError for empty images.
microgen::InclusionSpec estimate_inclusion(const microgen::RVEImage& img);

}  // namespace gpd::genlab
