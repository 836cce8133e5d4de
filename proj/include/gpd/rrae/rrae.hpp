#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpd/microgen/container.hpp"
#include "gpd/numkit/matrix.hpp"
#include "gpd/numkit/network.hpp"
#include "gpd/numkit/svd.hpp"
#include "gpd/rrae/config.hpp"

namespace gpd::rrae {

template <class T>
using Batch = numkit::Batch<T>;

/// Encoder, in-batch truncated SVD, decoder. Latents are stored as batch
/// rows, i.e. Y^T; the SVD works on Y (latent_dim x batch).
template <class T>
class RRAE {
public:
    explicit RRAE(RRAEConfig config);

    const RRAEConfig& config() const { return config_; }
    const numkit::Network<T>& encoder() const { return encoder_; }
    const numkit::Network<T>& decoder() const { return decoder_; }

    struct Pass {
        Batch<T> y;              // encoder output
        numkit::SvdResult svd;   // of Y, empty when truncation is off
        numkit::Truncation trunc;
        Batch<T> y_tilde;        // decoder input
        Batch<T> raw_output;     // decoder output before clamping
        Batch<T> x_tilde;        // reconstruction
        numkit::ForwardCache<T> enc_cache;
        numkit::ForwardCache<T> dec_cache;
    };

    /// With `truncate` false the SVD is skipped and the model is a plain
    /// autoencoder. ArgumentError when the batch holds fewer than k_max rows.
    Pass forward(std::span<const T> enc, std::span<const T> dec, const Batch<T>& x, bool truncate = true,
                 bool keep_cache = false) const;

    /// Reconstruction loss (percent) for the batch; accumulates its
    /// gradient into enc_grad / dec_grad (caller zeroes them).
    double loss_and_grad(std::span<const T> enc, std::span<const T> dec, const Batch<T>& x, std::span<T> enc_grad,
                         std::span<T> dec_grad, bool truncate = true) const;

private:
    RRAEConfig config_;
    numkit::Network<T> encoder_;
    numkit::Network<T> decoder_;
};

/// 100 * ||X - X~||_F / ||X||_F. ArgumentError on shape mismatch, DomainError
/// when ||X||_F = 0.
template <class T>
double rrae_loss(const Batch<T>& x, const Batch<T>& x_tilde);

struct StepInfo {
    std::uint64_t step = 0;
    std::uint64_t total = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct TrainOptions {
    bool truncate = true;  // false trains the no-SVD baseline
    std::function<void(const StepInfo&)> on_step;
};

template <class T>
struct TrainedRRAE {
    RRAEConfig config;
    std::vector<T> encoder_params;
    std::vector<T> decoder_params;
    numkit::Matrix u_k;                 // latent_dim x k_max, frozen
    std::vector<double> latent_mean;    // per coefficient over the training set
    std::vector<double> latent_std;
    std::vector<double> loss_history;   // every step
    std::vector<double> phase_end_loss; // full training set, after each phase
    double final_loss = 0.0;            // full-batch pass with the frozen basis

    std::size_t k() const { return u_k.cols(); }
};

template <class T>
TrainedRRAE<T> train_rrae(const Batch<T>& data, const RRAEConfig& config, const TrainOptions& options = {});

/// Full-dataset pass: frozen U_k from the SVD of all latents, coefficient
/// statistics, reconstruction loss.
template <class T>
void freeze_basis(TrainedRRAE<T>& model, const Batch<T>& data);

/// Coefficient rows alpha = U_k^T E(x), one per sample.
template <class T>
numkit::Matrix encode(const TrainedRRAE<T>& model, const Batch<T>& x);

/// D(U_k alpha) for each row of `alpha`, clamped when the config says so.
template <class T>
Batch<T> decode(const TrainedRRAE<T>& model, const numkit::Matrix& alpha);

/// Pixels >= 0.5 become 1.
template <class T>
std::vector<std::uint8_t> binary_view(const Batch<T>& images, std::size_t index);

/// Stores the model under `prefix` (config and loss history in the manifest,
/// parameters as f32, U_k and statistics as f64).
void put_model(microgen::DatasetContainer& c, const std::string& prefix, const TrainedRRAE<float>& model);
TrainedRRAE<float> get_model(const microgen::DatasetContainer& c, const std::string& prefix);

extern template class RRAE<float>;
extern template class RRAE<double>;

}  // namespace gpd::rrae
