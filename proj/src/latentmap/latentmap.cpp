#include "gpd/latentmap/latentmap.hpp"

#include <algorithm>
#include <cmath>

#include "gpd/errors.hpp"
#include "gpd/numkit/optimizer.hpp"
#include "gpd/rng.hpp"

namespace gpd::latentmap {

namespace {

constexpr double kStdFloor = 1e-8;
constexpr std::size_t kMinTrainRows = 32;

numkit::Batch<float> to_batch(const Matrix& m) {
    numkit::Batch<float> b(m.rows(), {m.cols(), 1, 1});
    for (std::size_t i = 0; i < m.size(); ++i) b.values[i] = static_cast<float>(m.data()[i]);
    return b;
}

Matrix head_rows(const Matrix& m, std::size_t count) {
    return Matrix(count, m.cols(), std::vector<double>(m.data().begin(), m.data().begin() + count * m.cols()));
}

void check_finite(const Matrix& m, const std::string& what) {
    if (!m.all_finite()) throw NumericalError("latent table: " + what + " has non-finite entries");
}

}  // namespace

ZScore ZScore::fit(const Matrix& rows, std::size_t count) {
    if (count == 0 || count > rows.rows()) throw ArgumentError("ZScore::fit: need 1.." + std::to_string(rows.rows()) + " rows");
    ZScore z;
    z.mean.assign(rows.cols(), 0.0);
    z.std.assign(rows.cols(), 0.0);
    for (std::size_t j = 0; j < rows.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < count; ++i) s += rows(i, j);
        const double m = s / static_cast<double>(count);
        double v = 0.0;
        for (std::size_t i = 0; i < count; ++i) v += (rows(i, j) - m) * (rows(i, j) - m);
        z.mean[j] = m;
        z.std[j] = std::max(std::sqrt(v / static_cast<double>(count)), kStdFloor);
    }
    return z;
}

Matrix ZScore::normalize(const Matrix& rows) const {
    if (rows.cols() != width()) throw ArgumentError("ZScore: width " + std::to_string(rows.cols()) + " != " + std::to_string(width()));
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j) out(i, j) = (rows(i, j) - mean[j]) / std[j];
    return out;
}

Matrix ZScore::denormalize(const Matrix& rows) const {
    if (rows.cols() != width()) throw ArgumentError("ZScore: width " + std::to_string(rows.cols()) + " != " + std::to_string(width()));
    Matrix out(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j) out(i, j) = rows(i, j) * std[j] + mean[j];
    return out;
}

std::vector<double> ZScore::normalize(std::span<const double> row) const {
    const Matrix m = normalize(Matrix(1, row.size(), std::vector<double>(row.begin(), row.end())));
    return {m.data().begin(), m.data().end()};
}

std::vector<double> ZScore::denormalize(std::span<const double> row) const {
    const Matrix m = denormalize(Matrix(1, row.size(), std::vector<double>(row.begin(), row.end())));
    return {m.data().begin(), m.data().end()};
}

LatentTable make_latent_table(Matrix alpha, Matrix gamma_x, Matrix gamma_1, Matrix gamma_2, std::size_t train_count) {
    const std::size_t n = alpha.rows();
    if (gamma_x.rows() != n || gamma_1.rows() != n || gamma_2.rows() != n) {
        throw ArgumentError("latent table: row counts differ (alpha " + std::to_string(n) + ", gamma_x " +
                            std::to_string(gamma_x.rows()) + ", gamma_1 " + std::to_string(gamma_1.rows()) +
                            ", gamma_2 " + std::to_string(gamma_2.rows()) + ")");
    }
    if (train_count == 0 || train_count > n) {
        throw ArgumentError("latent table: train_count " + std::to_string(train_count) + " outside 1.." + std::to_string(n));
    }
    check_finite(alpha, "alpha");
    check_finite(gamma_x, "gamma_x");
    check_finite(gamma_1, "gamma_1");
    check_finite(gamma_2, "gamma_2");
    LatentTable t;
    t.train_count = train_count;
    t.alpha_norm = ZScore::fit(alpha, train_count);
    t.gamma_x_norm = ZScore::fit(gamma_x, train_count);
    t.gamma_1_norm = ZScore::fit(gamma_1, train_count);
    t.gamma_2_norm = ZScore::fit(gamma_2, train_count);
    t.alpha = std::move(alpha);
    t.gamma_x = std::move(gamma_x);
    t.gamma_1 = std::move(gamma_1);
    t.gamma_2 = std::move(gamma_2);
    return t;
}

LatentTable build_latent_table(const rrae::TrainedRRAE<float>& geometry, const rrae::TrainedRRAE<float>& spatial,
                               const rrae::TrainedRRAE<float>& m1, const rrae::TrainedRRAE<float>& m2,
                               const numkit::Batch<float>& geometry_data, const numkit::Batch<float>& spatial_data,
                               const numkit::Batch<float>& m1_data, const numkit::Batch<float>& m2_data,
                               std::size_t train_count) {
    const auto check = [](const rrae::TrainedRRAE<float>& m, const numkit::Batch<float>& d, const char* name) {
        const auto want = m.config.input_shape();
        if (!(d.shape == want)) {
            throw ArgumentError(std::string("build_latent_table: ") + name + " model expects " + std::to_string(want.c) +
                                "x" + std::to_string(want.h) + "x" + std::to_string(want.w) + " samples, data has " +
                                std::to_string(d.shape.c) + "x" + std::to_string(d.shape.h) + "x" +
                                std::to_string(d.shape.w));
        }
    };
    check(geometry, geometry_data, "geometry");
    check(spatial, spatial_data, "spatial");
    check(m1, m1_data, "m1");
    check(m2, m2_data, "m2");
    return make_latent_table(rrae::encode(geometry, geometry_data), rrae::encode(spatial, spatial_data),
                             rrae::encode(m1, m1_data), rrae::encode(m2, m2_data), train_count);
}

RegressorSetConfig RegressorSetConfig::shortened(std::size_t divisor) const {
    if (divisor == 0) throw ArgumentError("RegressorSetConfig::shortened: divisor must be positive");
    RegressorSetConfig out = *this;
    for (auto* r : {&out.map_x, &out.map_1, &out.map_2}) r->epochs = std::max<std::size_t>(1, r->epochs / divisor);
    return out;
}

numkit::NetworkSpec regressor_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    numkit::NetworkSpec spec;
    spec.input = {in, 1, 1};
    std::size_t width = in;
    for (std::size_t h : hidden) {
        spec.layers.push_back(numkit::Dense{width, h, numkit::Activation::relu});
        width = h;
    }
    spec.layers.push_back(numkit::Dense{width, out, numkit::Activation::linear});
    return spec;
}

Matrix predict_normalized(const Regressor& reg, const Matrix& inputs) {
    const numkit::Network<float> net(reg.spec);
    if (inputs.cols() != reg.spec.input.size()) {
        throw ArgumentError("regressor expects " + std::to_string(reg.spec.input.size()) + " inputs, got " +
                            std::to_string(inputs.cols()));
    }
    const auto y = net.forward(reg.params, to_batch(inputs));
    Matrix out(y.rows, y.sample_size());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(y.values[i]);
    return out;
}

Regressor train_regressor(const Matrix& inputs, const Matrix& targets, const RegressorConfig& cfg, std::uint64_t seed) {
    const std::size_t n = inputs.rows();
    if (targets.rows() != n) throw ArgumentError("train_regressor: inputs and targets have different row counts");
    if (n < kMinTrainRows) {
        throw ArgumentError("train_regressor: need at least " + std::to_string(kMinTrainRows) + " training rows, got " +
                            std::to_string(n));
    }
    if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
        throw ArgumentError("train_regressor: epochs, batch size and learning rate must be positive");
    }
    Regressor reg;
    reg.spec = regressor_spec(inputs.cols(), cfg.hidden, targets.cols());
    reg.epochs = cfg.epochs;
    const numkit::Network<float> net(reg.spec);
    reg.params = net.init_params(derive_seed(seed, 0));
    Rng shuffle(derive_seed(seed, 1));

    const auto x = to_batch(inputs);
    const auto y = to_batch(targets);
    const std::size_t din = x.sample_size(), dout = y.sample_size();
    numkit::OptimizerState<float> state({numkit::OptimizerKind::adam}, reg.params.size());
    std::vector<float> grads(reg.params.size());
    reg.loss_history.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffle.permutation(n);
        double epoch_abs = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            numkit::Batch<float> xb(b, x.shape), yb(b, y.shape);
            for (std::size_t r = 0; r < b; ++r) {
                std::copy_n(x.sample(order[start + r]).begin(), din, xb.sample(r).begin());
                std::copy_n(y.sample(order[start + r]).begin(), dout, yb.sample(r).begin());
            }
            numkit::ForwardCache<float> cache;
            const auto pred = net.forward(reg.params, xb, &cache);
            numkit::Batch<float> g(b, y.shape);
            double batch_abs = 0.0;
            const float scale = 1.0f / static_cast<float>(b * dout);
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                const float e = pred.values[i] - yb.values[i];
                batch_abs += std::abs(static_cast<double>(e));
                g.values[i] = e > 0.0f ? scale : (e < 0.0f ? -scale : 0.0f);
            }
            if (!std::isfinite(batch_abs)) {
                throw TrainingError("regressor: loss is not finite at epoch " + std::to_string(epoch));
            }
            epoch_abs += batch_abs;
            std::fill(grads.begin(), grads.end(), 0.0f);
            net.backward(reg.params, cache, g, grads);
            numkit::optimizer_step(state, std::span<float>(reg.params), std::span<const float>(grads),
                                   cfg.learning_rate, net.blocks());
        }
        reg.loss_history.push_back(epoch_abs / static_cast<double>(n * dout));
    }

    const Matrix fit = predict_normalized(reg, inputs);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < dout; ++j) row += std::abs(fit(i, j) - targets(i, j));
        total += row;
        reg.max_sample_mae = std::max(reg.max_sample_mae, row / static_cast<double>(dout));
    }
    reg.train_mae = total / static_cast<double>(n * dout);
    return reg;
}

RegressorSet train_regressors(const LatentTable& table, const RegressorSetConfig& cfg) {
    if (table.train_count < kMinTrainRows) {
        throw ArgumentError("train_regressors: need at least " + std::to_string(kMinTrainRows) +
                            " training rows, table has " + std::to_string(table.train_count));
    }
    const Matrix a = table.alpha_norm.normalize(head_rows(table.alpha, table.train_count));
    RegressorSet out;
    out.map_x = train_regressor(a, table.gamma_x_norm.normalize(head_rows(table.gamma_x, table.train_count)), cfg.map_x,
                                derive_seed(cfg.seed, 0));
    out.map_1 = train_regressor(a, table.gamma_1_norm.normalize(head_rows(table.gamma_1, table.train_count)), cfg.map_1,
                                derive_seed(cfg.seed, 1));
    out.map_2 = train_regressor(a, table.gamma_2_norm.normalize(head_rows(table.gamma_2, table.train_count)), cfg.map_2,
                                derive_seed(cfg.seed, 2));
    return out;
}

Gammas predict_gammas(const RegressorSet& reg, const LatentTable& stats, std::span<const double> alpha) {
    const auto a = stats.alpha_norm.normalize(alpha);
    const Matrix in(1, a.size(), a);
    const auto run = [&](const Regressor& r, const ZScore& z) {
        const Matrix out = z.denormalize(predict_normalized(r, in));
        return std::vector<double>(out.data().begin(), out.data().end());
    };
    return {run(reg.map_x, stats.gamma_x_norm), run(reg.map_1, stats.gamma_1_norm), run(reg.map_2, stats.gamma_2_norm)};
}

namespace {

void put_regressor(microgen::DatasetContainer& c, const std::string& name, const Regressor& r) {
    c.meta[name] = {{"spec", numkit::to_json(r.spec)},
                    {"epochs", r.epochs},
                    {"train_mae", r.train_mae},
                    {"max_sample_mae", r.max_sample_mae}};
    c.put<float>(name + ".params", {r.params.size()}, r.params);
    c.put<double>(name + ".loss_history", {r.loss_history.size()}, r.loss_history);
}

Regressor get_regressor(const microgen::DatasetContainer& c, const std::string& name) {
    if (!c.meta.contains(name)) throw FormatError("container holds no regressor '" + name + "'");
    const auto& m = c.meta.at(name);
    Regressor r;
    r.spec = numkit::network_spec_from_json(m.at("spec"));
    r.epochs = m.at("epochs").get<std::size_t>();
    r.train_mae = m.at("train_mae").get<double>();
    r.max_sample_mae = m.at("max_sample_mae").get<double>();
    r.params = c.get<float>(name + ".params");
    r.loss_history = c.get<double>(name + ".loss_history");
    if (r.params.size() != numkit::Network<float>(r.spec).param_count()) {
        throw ConsistencyError(name + ": parameter count does not match the stored architecture");
    }
    return r;
}

void put_matrix(microgen::DatasetContainer& c, const std::string& name, const Matrix& m) {
    c.put<double>(name, {m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

Matrix get_matrix(const microgen::DatasetContainer& c, const std::string& name) {
    const auto& a = c.at(name);
    if (a.shape.size() != 2) throw FormatError("array '" + name + "' must be two-dimensional");
    return Matrix(a.shape[0], a.shape[1], c.get<double>(name));
}

void put_zscore(microgen::DatasetContainer& c, const std::string& name, const ZScore& z) {
    c.put<double>(name + ".mean", {z.mean.size()}, z.mean);
    c.put<double>(name + ".std", {z.std.size()}, z.std);
}

ZScore get_zscore(const microgen::DatasetContainer& c, const std::string& name) {
    ZScore z{c.get<double>(name + ".mean"), c.get<double>(name + ".std")};
    if (z.mean.size() != z.std.size()) throw ConsistencyError(name + ": mean and std widths differ");
    return z;
}

}  // namespace

void put_regressors(microgen::DatasetContainer& c, const std::string& prefix, const RegressorSet& reg) {
    put_regressor(c, prefix + ".map_x", reg.map_x);
    put_regressor(c, prefix + ".map_1", reg.map_1);
    put_regressor(c, prefix + ".map_2", reg.map_2);
}

RegressorSet get_regressors(const microgen::DatasetContainer& c, const std::string& prefix) {
    return {get_regressor(c, prefix + ".map_x"), get_regressor(c, prefix + ".map_1"),
            get_regressor(c, prefix + ".map_2")};
}

void put_table(microgen::DatasetContainer& c, const std::string& prefix, const LatentTable& t) {
    c.meta[prefix] = {{"train_count", t.train_count}, {"stats_source", t.stats_source}};
    put_matrix(c, prefix + ".alpha", t.alpha);
    put_matrix(c, prefix + ".gamma_x", t.gamma_x);
    put_matrix(c, prefix + ".gamma_1", t.gamma_1);
    put_matrix(c, prefix + ".gamma_2", t.gamma_2);
    put_zscore(c, prefix + ".alpha_norm", t.alpha_norm);
    put_zscore(c, prefix + ".gamma_x_norm", t.gamma_x_norm);
    put_zscore(c, prefix + ".gamma_1_norm", t.gamma_1_norm);
    put_zscore(c, prefix + ".gamma_2_norm", t.gamma_2_norm);
}

LatentTable get_table(const microgen::DatasetContainer& c, const std::string& prefix) {
    if (!c.meta.contains(prefix)) throw FormatError("container holds no latent table '" + prefix + "'");
    const auto& m = c.meta.at(prefix);
    LatentTable t;
    t.train_count = m.at("train_count").get<std::size_t>();
    t.stats_source = m.at("stats_source").get<std::string>();
    t.alpha = get_matrix(c, prefix + ".alpha");
    t.gamma_x = get_matrix(c, prefix + ".gamma_x");
    t.gamma_1 = get_matrix(c, prefix + ".gamma_1");
    t.gamma_2 = get_matrix(c, prefix + ".gamma_2");
    t.alpha_norm = get_zscore(c, prefix + ".alpha_norm");
    t.gamma_x_norm = get_zscore(c, prefix + ".gamma_x_norm");
    t.gamma_1_norm = get_zscore(c, prefix + ".gamma_1_norm");
    t.gamma_2_norm = get_zscore(c, prefix + ".gamma_2_norm");
    if (t.stats_source != "train") throw ConsistencyError(prefix + ": statistics were not fitted on the training split");
    if (t.alpha_norm.width() != t.alpha.cols() || t.gamma_x_norm.width() != t.gamma_x.cols() ||
        t.gamma_1_norm.width() != t.gamma_1.cols() || t.gamma_2_norm.width() != t.gamma_2.cols()) {
        throw ConsistencyError(prefix + ": normalization widths disagree with the latent columns");
    }
    return t;
}

}  // namespace gpd::latentmap
