#include "gpd/rrae/rrae.hpp"

#include <algorithm>
#include <cmath>

#include "gpd/errors.hpp"
#include "gpd/rng.hpp"

namespace gpd::rrae {

using numkit::Matrix;

namespace {

constexpr std::size_t kChunk = 32;

// Batch rows are samples; the returned matrix has one column per sample.
template <class T>
Matrix columns_of(const Batch<T>& b) {
    const std::size_t d = b.sample_size();
    Matrix m(d, b.rows);
    for (std::size_t n = 0; n < b.rows; ++n)
        for (std::size_t i = 0; i < d; ++i) m(i, n) = static_cast<double>(b.values[n * d + i]);
    return m;
}

template <class T>
Batch<T> rows_of(const Matrix& m, numkit::Shape shape) {
    Batch<T> b(m.cols(), shape);
    const std::size_t d = shape.size();
    for (std::size_t n = 0; n < m.cols(); ++n)
        for (std::size_t i = 0; i < d; ++i) b.values[n * d + i] = static_cast<T>(m(i, n));
    return b;
}

template <class T>
Batch<T> slice(const Batch<T>& b, std::size_t first, std::size_t count) {
    Batch<T> out(count, b.shape);
    const std::size_t d = b.sample_size();
    std::copy(b.values.begin() + static_cast<std::ptrdiff_t>(first * d),
              b.values.begin() + static_cast<std::ptrdiff_t>((first + count) * d), out.values.begin());
    return out;
}

template <class T>
Batch<T> gather(const Batch<T>& b, std::span<const std::size_t> idx) {
    Batch<T> out(idx.size(), b.shape);
    const std::size_t d = b.sample_size();
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(b.values.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d,
                    out.values.begin() + static_cast<std::ptrdiff_t>(r * d));
    return out;
}

template <class T>
void clamp_unit(Batch<T>& b) {
    for (auto& v : b.values) v = std::clamp(v, T(0), T(1));
}

// Squared error and squared norm, accumulated in double.
template <class T>
std::pair<double, double> error_terms(const Batch<T>& x, const Batch<T>& xt) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double d = static_cast<double>(xt.values[i]) - static_cast<double>(x.values[i]);
        num += d * d;
        den += static_cast<double>(x.values[i]) * static_cast<double>(x.values[i]);
    }
    return {num, den};
}

}  // namespace

template <class T>
RRAE<T>::RRAE(RRAEConfig config)
    : config_(std::move(config)), encoder_(config_.encoder), decoder_(config_.decoder) {
    config_.validate();
}

template <class T>
typename RRAE<T>::Pass RRAE<T>::forward(std::span<const T> enc, std::span<const T> dec, const Batch<T>& x,
                                        bool truncate, bool keep_cache) const {
    if (!(x.shape == encoder_.input_shape())) throw ArgumentError(config_.name + ": input shape mismatch");
    if (truncate && x.rows < config_.k_max) {
        throw ArgumentError(config_.name + ": batch of " + std::to_string(x.rows) + " is smaller than k_max " +
                            std::to_string(config_.k_max));
    }
    Pass p;
    p.y = encoder_.forward(enc, x, keep_cache ? &p.enc_cache : nullptr);
    if (truncate) {
        p.svd = numkit::thin_svd(columns_of(p.y));
        p.trunc = numkit::truncate(p.svd, config_.k_max);
        p.y_tilde = rows_of<T>(p.trunc.u_k * p.trunc.a, p.y.shape);
    } else {
        p.y_tilde = p.y;
    }
    p.raw_output = decoder_.forward(dec, p.y_tilde, keep_cache ? &p.dec_cache : nullptr);
    p.x_tilde = p.raw_output;
    if (config_.clamp_output) clamp_unit(p.x_tilde);
    return p;
}

template <class T>
double RRAE<T>::loss_and_grad(std::span<const T> enc, std::span<const T> dec, const Batch<T>& x,
                              std::span<T> enc_grad, std::span<T> dec_grad, bool truncate) const {
    Pass p = forward(enc, dec, x, truncate, true);
    const auto [num, den] = error_terms(x, p.x_tilde);
    if (!(den > 0.0)) throw DomainError(config_.name + ": loss undefined for an all-zero batch");
    const double err = std::sqrt(num);
    const double loss = 100.0 * err / std::sqrt(den);

    Batch<T> g(x.rows, x.shape);
    if (err > 0.0) {
        const double scale = 100.0 / (err * std::sqrt(den));
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            double gi = scale * (static_cast<double>(p.x_tilde.values[i]) - static_cast<double>(x.values[i]));
            if (config_.clamp_output) {
                // Clamped entries pass gradient only when descent moves them back into [0, 1].
                const T r = p.raw_output.values[i];
                if ((r < T(0) && gi > 0.0) || (r > T(1) && gi < 0.0)) gi = 0.0;
            }
            g.values[i] = static_cast<T>(gi);
        }
    }
    Batch<T> gy = decoder_.backward(dec, p.dec_cache, g, dec_grad);
    if (truncate) {
        // Tangent-space projection of the gradient for the rank-k truncation:
        // dY = G - (I - P_U) G (I - P_V).
        const Matrix gm = columns_of(gy);
        const Matrix& u = p.trunc.u_k;
        const Matrix v = p.svd.v.block_columns(0, config_.k_max);
        const Matrix h = gm - u * (u.transpose() * gm);
        const Matrix outside = h - (h * v) * v.transpose();
        gy = rows_of<T>(gm - outside, gy.shape);
    }
    encoder_.backward(enc, p.enc_cache, gy, enc_grad);
    return loss;
}

template <class T>
double rrae_loss(const Batch<T>& x, const Batch<T>& x_tilde) {
    if (x.rows != x_tilde.rows || !(x.shape == x_tilde.shape)) throw ArgumentError("rrae_loss: shape mismatch");
    const auto [num, den] = error_terms(x, x_tilde);
    if (!(den > 0.0)) throw DomainError("rrae_loss: undefined for ||X|| = 0");
    return 100.0 * std::sqrt(num / den);
}

namespace {

// Reconstruction loss over the whole dataset, in consecutive in-batch-SVD chunks of
// the training batch size; a short tail joins the previous chunk.
template <class T>
double dataset_loss(const RRAE<T>& model, std::span<const T> enc, std::span<const T> dec, const Batch<T>& data,
                    bool truncate) {
    const std::size_t bs = model.config().batch_size;
    double num = 0.0, den = 0.0;
    std::size_t first = 0;
    while (first < data.rows) {
        std::size_t count = std::min(bs, data.rows - first);
        if (data.rows - first - count < bs) count = data.rows - first;
        const Batch<T> xb = slice(data, first, count);
        const auto p = model.forward(enc, dec, xb, truncate);
        const auto [n, d] = error_terms(xb, p.x_tilde);
        num += n;
        den += d;
        first += count;
    }
    return 100.0 * std::sqrt(num / den);
}

}  // namespace

template <class T>
TrainedRRAE<T> train_rrae(const Batch<T>& data, const RRAEConfig& config, const TrainOptions& options) {
    if (data.rows == 0) throw ArgumentError(config.name + ": empty training set");
    config.validate(data.rows);
    const RRAE<T> model(config);
    if (!(data.shape == model.encoder().input_shape())) {
        throw ArgumentError(config.name + ": dataset shape does not match the encoder input");
    }

    TrainedRRAE<T> out;
    out.config = config;
    out.encoder_params = model.encoder().init_params(derive_seed(config.seed, 0));
    out.decoder_params = model.decoder().init_params(derive_seed(config.seed, 1));
    numkit::OptimizerState<T> enc_state(config.optimizer, out.encoder_params.size());
    numkit::OptimizerState<T> dec_state(config.optimizer, out.decoder_params.size());
    std::vector<T> enc_grad(out.encoder_params.size()), dec_grad(out.decoder_params.size());
    Rng shuffle(derive_seed(config.seed, 2));

    const std::uint64_t total = config.schedule.total_steps();
    std::vector<std::uint64_t> phase_ends;
    {
        std::uint64_t end = 0;
        for (const auto& [steps, rate] : config.schedule.phases) phase_ends.push_back(end += steps);
    }
    std::vector<std::size_t> order;
    std::size_t pos = data.rows;  // forces a shuffle on the first step
    out.loss_history.reserve(total);
    for (std::uint64_t step = 0; step < total; ++step) {
        if (pos + config.batch_size > data.rows) {
            order = shuffle.permutation(data.rows);
            pos = 0;
        }
        const Batch<T> xb = gather(data, std::span<const std::size_t>(order).subspan(pos, config.batch_size));
        pos += config.batch_size;

        std::fill(enc_grad.begin(), enc_grad.end(), T(0));
        std::fill(dec_grad.begin(), dec_grad.end(), T(0));
        double loss = 0.0;
        try {
            loss = model.loss_and_grad(out.encoder_params, out.decoder_params, xb, enc_grad, dec_grad,
                                       options.truncate);
        } catch (const Error& e) {
            // thin_svd rejects non-finite latents before any loss exists
            throw TrainingError(config.name + ": loss diverged at step " + std::to_string(step) + " (" + e.what() +
                                ")");
        }
        if (!std::isfinite(loss)) {
            throw TrainingError(config.name + ": loss diverged at step " + std::to_string(step));
        }
        const double lr = config.schedule.lr_at(step);
        try {
            numkit::optimizer_step(dec_state, std::span<T>(out.decoder_params), std::span<const T>(dec_grad), lr,
                                   model.decoder().blocks());
            numkit::optimizer_step(enc_state, std::span<T>(out.encoder_params), std::span<const T>(enc_grad), lr,
                                   model.encoder().blocks());
        } catch (const TrainingError& e) {
            throw TrainingError(config.name + " step " + std::to_string(step) + ": " + e.what());
        }
        out.loss_history.push_back(loss);
        if (options.on_step) options.on_step({step, total, loss, lr});
        if (std::find(phase_ends.begin(), phase_ends.end(), step + 1) != phase_ends.end()) {
            out.phase_end_loss.push_back(
                dataset_loss<T>(model, out.encoder_params, out.decoder_params, data, options.truncate));
        }
    }
    if (options.truncate) freeze_basis(out, data);
    return out;
}

template <class T>
void freeze_basis(TrainedRRAE<T>& m, const Batch<T>& data) {
    const numkit::Network<T> enc(m.config.encoder);
    const std::size_t latent = m.config.latent_dim;
    const std::size_t k = m.config.k_max;
    if (data.rows < k) throw ArgumentError(m.config.name + ": fewer samples than k_max");
    Matrix y(latent, data.rows);
    for (std::size_t first = 0; first < data.rows; first += kChunk) {
        const std::size_t count = std::min(kChunk, data.rows - first);
        const auto yb = enc.forward(m.encoder_params, slice(data, first, count));
        for (std::size_t n = 0; n < count; ++n)
            for (std::size_t l = 0; l < latent; ++l) y(l, first + n) = static_cast<double>(yb.values[n * latent + l]);
    }
    const auto tr = numkit::truncate(numkit::thin_svd(y), k);
    m.u_k = tr.u_k;
    m.latent_mean.assign(k, 0.0);
    m.latent_std.assign(k, 0.0);
    const double n = static_cast<double>(data.rows);
    for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0, ss = 0.0;
        for (std::size_t j = 0; j < data.rows; ++j) s += tr.a(c, j);
        const double mean = s / n;
        for (std::size_t j = 0; j < data.rows; ++j) ss += (tr.a(c, j) - mean) * (tr.a(c, j) - mean);
        m.latent_mean[c] = mean;
        m.latent_std[c] = std::sqrt(ss / n);
    }
    Matrix alpha = tr.a.transpose();
    const Batch<T> rec = decode(m, alpha);
    m.final_loss = rrae_loss(data, rec);
}

template <class T>
Matrix encode(const TrainedRRAE<T>& m, const Batch<T>& x) {
    const numkit::Network<T> enc(m.config.encoder);
    if (!(x.shape == enc.input_shape())) throw ArgumentError(m.config.name + ": encode input shape mismatch");
    if (m.u_k.rows() != m.config.latent_dim) throw UsageError(m.config.name + ": model has no frozen basis");
    Matrix alpha(x.rows, m.u_k.cols());
    const std::size_t latent = m.config.latent_dim;
    for (std::size_t first = 0; first < x.rows; first += kChunk) {
        const std::size_t count = std::min(kChunk, x.rows - first);
        const auto yb = enc.forward(m.encoder_params, slice(x, first, count));
        for (std::size_t n = 0; n < count; ++n)
            for (std::size_t c = 0; c < m.u_k.cols(); ++c) {
                double s = 0.0;
                for (std::size_t l = 0; l < latent; ++l) s += m.u_k(l, c) * static_cast<double>(yb.values[n * latent + l]);
                alpha(first + n, c) = s;
            }
    }
    return alpha;
}

template <class T>
Batch<T> decode(const TrainedRRAE<T>& m, const Matrix& alpha) {
    if (alpha.cols() != m.u_k.cols()) {
        throw ArgumentError(m.config.name + ": expected " + std::to_string(m.u_k.cols()) + " coefficients, got " +
                            std::to_string(alpha.cols()));
    }
    const numkit::Network<T> dec(m.config.decoder);
    Batch<T> out(alpha.rows(), dec.output_shape());
    const std::size_t d = out.sample_size();
    for (std::size_t first = 0; first < alpha.rows(); first += kChunk) {
        const std::size_t count = std::min(kChunk, alpha.rows() - first);
        Batch<T> yt(count, dec.input_shape());
        for (std::size_t n = 0; n < count; ++n)
            for (std::size_t l = 0; l < m.u_k.rows(); ++l) {
                double s = 0.0;
                for (std::size_t c = 0; c < m.u_k.cols(); ++c) s += m.u_k(l, c) * alpha(first + n, c);
                yt.values[n * m.u_k.rows() + l] = static_cast<T>(s);
            }
        const auto xb = dec.forward(m.decoder_params, yt);
        std::copy(xb.values.begin(), xb.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(first * d));
    }
    if (m.config.clamp_output) clamp_unit(out);
    return out;
}

template <class T>
std::vector<std::uint8_t> binary_view(const Batch<T>& images, std::size_t index) {
    const auto s = images.sample(index);
    std::vector<std::uint8_t> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] >= T(0.5) ? 1 : 0;
    return out;
}

void put_model(microgen::DatasetContainer& c, const std::string& prefix, const TrainedRRAE<float>& m) {
    c.meta[prefix] = {{"config", to_json(m.config)}, {"phase_end_loss", m.phase_end_loss}, {"final_loss", m.final_loss}};
    c.put<float>(prefix + ".encoder", {m.encoder_params.size()}, m.encoder_params);
    c.put<float>(prefix + ".decoder", {m.decoder_params.size()}, m.decoder_params);
    c.put<double>(prefix + ".u_k", {m.u_k.rows(), m.u_k.cols()},
                  std::vector<double>(m.u_k.data().begin(), m.u_k.data().end()));
    c.put<double>(prefix + ".latent_mean", {m.latent_mean.size()}, m.latent_mean);
    c.put<double>(prefix + ".latent_std", {m.latent_std.size()}, m.latent_std);
    c.put<double>(prefix + ".loss_history", {m.loss_history.size()}, m.loss_history);
}

TrainedRRAE<float> get_model(const microgen::DatasetContainer& c, const std::string& prefix) {
    if (!c.meta.contains(prefix)) throw FormatError("container holds no RRAE '" + prefix + "'");
    const auto& meta = c.meta.at(prefix);
    TrainedRRAE<float> m;
    m.config = config_from_json(meta.at("config"));
    m.phase_end_loss = meta.at("phase_end_loss").get<std::vector<double>>();
    m.final_loss = meta.at("final_loss").get<double>();
    m.encoder_params = c.get<float>(prefix + ".encoder");
    m.decoder_params = c.get<float>(prefix + ".decoder");
    const auto& ua = c.at(prefix + ".u_k");
    if (ua.shape.size() != 2) throw FormatError("array '" + prefix + ".u_k' must be two-dimensional");
    m.u_k = Matrix(ua.shape[0], ua.shape[1], c.get<double>(prefix + ".u_k"));
    m.latent_mean = c.get<double>(prefix + ".latent_mean");
    m.latent_std = c.get<double>(prefix + ".latent_std");
    m.loss_history = c.get<double>(prefix + ".loss_history");

    const numkit::Network<float> enc(m.config.encoder), dec(m.config.decoder);
    if (m.encoder_params.size() != enc.param_count() || m.decoder_params.size() != dec.param_count()) {
        throw ConsistencyError(prefix + ": parameter count does not match the stored architecture");
    }
    if (m.u_k.rows() != m.config.latent_dim || m.u_k.cols() != m.config.k_max || m.latent_mean.size() != m.config.k_max ||
        m.latent_std.size() != m.config.k_max) {
        throw ConsistencyError(prefix + ": basis or statistics width disagrees with latent_dim/k_max");
    }
    return m;
}

template class RRAE<float>;
template class RRAE<double>;
template double rrae_loss<float>(const Batch<float>&, const Batch<float>&);
template double rrae_loss<double>(const Batch<double>&, const Batch<double>&);
template TrainedRRAE<float> train_rrae<float>(const Batch<float>&, const RRAEConfig&, const TrainOptions&);
template TrainedRRAE<double> train_rrae<double>(const Batch<double>&, const RRAEConfig&, const TrainOptions&);
template void freeze_basis<float>(TrainedRRAE<float>&, const Batch<float>&);
template void freeze_basis<double>(TrainedRRAE<double>&, const Batch<double>&);
template Matrix encode<float>(const TrainedRRAE<float>&, const Batch<float>&);
template Matrix encode<double>(const TrainedRRAE<double>&, const Batch<double>&);
template Batch<float> decode<float>(const TrainedRRAE<float>&, const Matrix&);
template Batch<double> decode<double>(const TrainedRRAE<double>&, const Matrix&);
template std::vector<std::uint8_t> binary_view<float>(const Batch<float>&, std::size_t);
template std::vector<std::uint8_t> binary_view<double>(const Batch<double>&, std::size_t);

}  // namespace gpd::rrae
