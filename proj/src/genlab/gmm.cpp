#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "gpd/errors.hpp"
#include "gpd/genlab/genlab.hpp"
#include "gpd/rng.hpp"

namespace gpd::genlab {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kMinMass = 1e-3;      // components below this responsibility mass are pruned
constexpr int kRidgeEscalations = 6;   // x10 each before giving up on a component

Mat to_eigen(const Matrix& m) {
    Mat e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

Matrix from_eigen(const Mat& e) {
    Matrix m(e.rows(), e.cols());
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j) m(i, j) = e(i, j);
    return m;
}

struct Component {
    double weight = 0.0;
    Vec mean;
    Mat cov;
    Mat chol;  // lower factor of cov
    double log_det = 0.0;
};

// Factor cov (+ escalating ridge). False when even the largest ridge fails.
bool factor(Component& c, double ridge) {
    const auto d = c.cov.rows();
    double r = 0.0;
    for (int attempt = 0; attempt <= kRidgeEscalations; ++attempt) {
        Eigen::LLT<Mat> llt(c.cov + r * Mat::Identity(d, d));
        if (llt.info() == Eigen::Success) {
            c.cov += r * Mat::Identity(d, d);
            c.chol = llt.matrixL();
            c.log_det = 2.0 * c.chol.diagonal().array().log().sum();
            return std::isfinite(c.log_det);
        }
        r = r == 0.0 ? ridge * 10.0 : r * 10.0;
    }
    return false;
}

// Log of weight * density for every (row, component).
Mat log_joint(const std::vector<Component>& comps, const Mat& x) {
    const auto n = x.rows();
    const double d = static_cast<double>(x.cols());
    Mat out(n, static_cast<Eigen::Index>(comps.size()));
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const auto& c = comps[j];
        const Mat z = c.chol.triangularView<Eigen::Lower>().solve((x.rowwise() - c.mean.transpose()).transpose());
        const double base = std::log(c.weight) - 0.5 * (d * std::log(2.0 * std::numbers::pi) + c.log_det);
        out.col(static_cast<Eigen::Index>(j)) = (base - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
    }
    return out;
}

// Row-wise log-sum-exp; turns `lj` into responsibilities when asked.
Vec normalize_rows(Mat& lj, bool to_resp) {
    Vec lse(lj.rows());
    for (Eigen::Index i = 0; i < lj.rows(); ++i) {
        const double top = lj.row(i).maxCoeff();
        lse(i) = top + std::log((lj.row(i).array() - top).exp().sum());
        if (to_resp) lj.row(i) = (lj.row(i).array() - lse(i)).exp().matrix();
    }
    return lse;
}

// Mean log-likelihood; fills responsibilities (N x K).
double e_step(const std::vector<Component>& comps, const Mat& x, Mat& resp) {
    resp = log_joint(comps, x);
    return normalize_rows(resp, true).mean();
}

// Weighted moments; drops components that lose their mass or cannot be
// factored. Returns the number dropped.
std::size_t m_step(std::vector<Component>& comps, const Mat& x, const Mat& resp, double ridge) {
    const auto n = x.rows();
    const auto d = x.cols();
    std::vector<Component> kept;
    std::size_t dropped = 0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const auto r = resp.col(static_cast<Eigen::Index>(j));
        const double mass = r.sum();
        if (!(mass >= kMinMass)) {
            ++dropped;
            continue;
        }
        Component c;
        c.weight = mass / static_cast<double>(n);
        c.mean = (x.transpose() * r) / mass;
        const Mat centered = x.rowwise() - c.mean.transpose();
        c.cov = (centered.transpose() * r.asDiagonal() * centered) / mass + ridge * Mat::Identity(d, d);
        c.cov = 0.5 * (c.cov + c.cov.transpose());
        if (!factor(c, ridge)) {
            ++dropped;
            continue;
        }
        kept.push_back(std::move(c));
    }
    double wsum = 0.0;
    for (const auto& c : kept) wsum += c.weight;
    for (auto& c : kept) c.weight /= wsum;
    comps = std::move(kept);
    return dropped;
}

// k-means++ seeding followed by one hard-assignment moment step.
std::vector<Component> initialize(const Mat& x, std::size_t k, double ridge, Rng& rng) {
    const auto n = x.rows();
    std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)))};
    Vec dist = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
    while (centers.size() < k) {
        const double total = dist.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (pick = 0; pick < n - 1; ++pick) {
                u -= dist(pick);
                if (u < 0.0) break;
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        }
        centers.push_back(pick);
        dist = dist.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
    }
    Mat resp = Mat::Zero(n, static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const double dj = (x.row(i) - x.row(centers[j])).squaredNorm();
            if (dj < bd) bd = dj, best = static_cast<Eigen::Index>(j);
        }
        resp(i, best) = 1.0;
    }
    std::vector<Component> comps(k);
    m_step(comps, x, resp, ridge);
    return comps;
}

GmmModel run_em(const Mat& x, std::size_t k, const GmmConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    auto comps = initialize(x, k, cfg.ridge, rng);
    GmmModel out;
    Mat resp;
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0;; ++it) {
        if (comps.empty()) throw FitError("EM lost every component");
        const double ll = e_step(comps, x, resp);
        if (!std::isfinite(ll)) throw FitError("EM log-likelihood is not finite");
        out.ll_history.push_back(ll);
        // Pruning changes the model family, so only compare steps without it.
        if (ll < prev - 1e-10 * (1.0 + std::abs(prev))) out.monotone = false;
        out.iterations = it;
        if (ll - prev < cfg.tolerance || it >= cfg.max_iterations) break;
        const std::size_t dropped = m_step(comps, x, resp, cfg.ridge);
        out.pruned += dropped;
        prev = dropped ? -std::numeric_limits<double>::infinity() : ll;
    }
    const auto d = x.cols();
    out.weights.clear();
    out.means = Matrix(comps.size(), static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < comps.size(); ++j) {
        out.weights.push_back(comps[j].weight);
        for (Eigen::Index c = 0; c < d; ++c) out.means(j, static_cast<std::size_t>(c)) = comps[j].mean(c);
        out.covariances.push_back(from_eigen(comps[j].cov));
    }
    out.log_likelihood = out.ll_history.back() * static_cast<double>(x.rows());
    out.bic = -2.0 * out.log_likelihood +
              static_cast<double>(out.parameter_count()) * std::log(static_cast<double>(x.rows()));
    return out;
}

std::vector<Component> components_of(const GmmModel& m) {
    std::vector<Component> comps(m.k());
    for (std::size_t j = 0; j < m.k(); ++j) {
        comps[j].weight = m.weights[j];
        comps[j].mean = to_eigen(m.means).row(static_cast<Eigen::Index>(j)).transpose();
        comps[j].cov = to_eigen(m.covariances[j]);
        if (!factor(comps[j], 0.0)) throw NumericalError("GMM component " + std::to_string(j) + " is not positive definite");
    }
    return comps;
}

}  // namespace

std::size_t GmmModel::parameter_count() const {
    const std::size_t d = dim();
    return k() - 1 + k() * d + k() * d * (d + 1) / 2;
}

void GmmConfig::validate() const {
    if (k_min == 0 || k_max < k_min) throw ArgumentError("GMM candidates need 1 <= k_min <= k_max");
    if (restarts == 0 || max_iterations == 0) throw ArgumentError("GMM restarts and iteration cap must be positive");
    if (!(tolerance > 0.0) || !(ridge > 0.0)) throw ArgumentError("GMM tolerance and ridge must be positive");
}

GmmModel fit_gmm_k(const Matrix& x, std::size_t k, const GmmConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (x.rows() < k) throw ArgumentError("GMM with " + std::to_string(k) + " components needs at least that many rows");
    if (!x.all_finite()) throw ArgumentError("GMM data has non-finite entries");
    const Mat e = to_eigen(x);
    GmmModel best;
    bool have = false;
    std::string last_error;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        try {
            GmmModel m = run_em(e, k, cfg, derive_seed(seed, r));
            if (!have || m.log_likelihood > best.log_likelihood) best = std::move(m), have = true;
        } catch (const FitError& err) {
            last_error = err.what();
        }
    }
    if (!have) throw FitError("K=" + std::to_string(k) + ": every EM restart failed (" + last_error + ")");
    return best;
}

GmmFit fit_gmm(const Matrix& x, const GmmConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (x.rows() < 2 * cfg.k_max) {
        throw ArgumentError("fit_gmm: " + std::to_string(x.rows()) + " rows, need at least 2*k_max = " +
                            std::to_string(2 * cfg.k_max));
    }
    GmmFit out;
    bool have = false;
    for (std::size_t k = cfg.k_min; k <= cfg.k_max; ++k) {
        CandidateReport rep;
        rep.k = k;
        try {
            GmmModel m = fit_gmm_k(x, k, cfg, derive_seed(seed, k));
            rep.fitted_k = m.k();
            rep.log_likelihood = m.log_likelihood;
            rep.bic = m.bic;
            if (!have || m.bic < out.model.bic) out.model = std::move(m), have = true;
        } catch (const FitError& e) {
            rep.failed = true;
            rep.error = e.what();
        }
        out.candidates.push_back(rep);
    }
    if (!have) throw FitError("fit_gmm: no candidate K could be fitted");
    return out;
}

std::vector<double> log_density(const GmmModel& m, const Matrix& x) {
    if (x.cols() != m.dim()) throw ArgumentError("GMM expects " + std::to_string(m.dim()) + " columns");
    Mat lj = log_joint(components_of(m), to_eigen(x));
    const Vec lse = normalize_rows(lj, false);
    return {lse.data(), lse.data() + lse.size()};
}

double total_log_likelihood(const GmmModel& m, const Matrix& x) {
    double s = 0.0;
    for (double v : log_density(m, x)) s += v;
    return s;
}

Matrix sample_latents(const GmmModel& m, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ArgumentError("sample_latents: n must be at least 1");
    const auto comps = components_of(m);
    Rng rng(seed);
    const std::size_t d = m.dim();
    Matrix out(n, d);
    Vec z(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t j = 0;
        while (j + 1 < comps.size() && u >= comps[j].weight) u -= comps[j++].weight;
        for (std::size_t c = 0; c < d; ++c) z(static_cast<Eigen::Index>(c)) = rng.normal();
        const Vec x = comps[j].mean + comps[j].chol * z;
        for (std::size_t c = 0; c < d; ++c) out(i, c) = x(static_cast<Eigen::Index>(c));
    }
    return out;
}

BoundsReport latent_bounds_check(const Matrix& samples, const Matrix& reference, double stds) {
    if (samples.cols() != reference.cols() || reference.rows() == 0) {
        throw ArgumentError("latent_bounds_check: column counts differ or reference is empty");
    }
    const std::size_t d = reference.cols();
    std::vector<double> lo(d), hi(d);
    for (std::size_t c = 0; c < d; ++c) {
        const auto col = reference.column(c);
        double mean = 0.0, var = 0.0;
        for (double v : col) mean += v / static_cast<double>(col.size());
        for (double v : col) var += (v - mean) * (v - mean) / static_cast<double>(col.size());
        const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
        lo[c] = *mn - stds * std::sqrt(var);
        hi[c] = *mx + stds * std::sqrt(var);
    }
    BoundsReport rep;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            if (samples(i, c) < lo[c] || samples(i, c) > hi[c]) {
                ++rep.outside;
                break;
            }
        }
    }
    rep.fraction_inside = samples.rows() ? 1.0 - static_cast<double>(rep.outside) / static_cast<double>(samples.rows()) : 1.0;
    return rep;
}

void put_gmm(microgen::DatasetContainer& c, const std::string& prefix, const GmmModel& m) {
    c.meta[prefix] = {{"log_likelihood", m.log_likelihood}, {"bic", m.bic},     {"iterations", m.iterations},
                      {"pruned", m.pruned},                 {"monotone", m.monotone}};
    c.put<double>(prefix + ".weights", {m.k()}, m.weights);
    c.put<double>(prefix + ".means", {m.k(), m.dim()}, std::vector<double>(m.means.data().begin(), m.means.data().end()));
    std::vector<double> cov;
    for (const auto& s : m.covariances) cov.insert(cov.end(), s.data().begin(), s.data().end());
    c.put<double>(prefix + ".covariances", {m.k(), m.dim(), m.dim()}, cov);
    c.put<double>(prefix + ".ll_history", {m.ll_history.size()}, m.ll_history);
}

GmmModel get_gmm(const microgen::DatasetContainer& c, const std::string& prefix) {
    if (!c.meta.contains(prefix)) throw FormatError("container holds no GMM '" + prefix + "'");
    const auto& meta = c.meta.at(prefix);
    GmmModel m;
    m.log_likelihood = meta.at("log_likelihood").get<double>();
    m.bic = meta.at("bic").get<double>();
    m.iterations = meta.at("iterations").get<std::size_t>();
    m.pruned = meta.at("pruned").get<std::size_t>();
    m.monotone = meta.at("monotone").get<bool>();
    m.weights = c.get<double>(prefix + ".weights");
    const auto& ma = c.at(prefix + ".means");
    if (ma.shape.size() != 2 || ma.shape[0] != m.weights.size()) {
        throw ConsistencyError(prefix + ": means do not match the component count");
    }
    const std::size_t k = ma.shape[0], d = ma.shape[1];
    m.means = Matrix(k, d, c.get<double>(prefix + ".means"));
    const auto cov = c.get<double>(prefix + ".covariances");
    if (cov.size() != k * d * d) throw ConsistencyError(prefix + ": covariance block has the wrong size");
    for (std::size_t j = 0; j < k; ++j) {
        m.covariances.emplace_back(d, d, std::vector<double>(cov.begin() + static_cast<std::ptrdiff_t>(j * d * d),
                                                              cov.begin() + static_cast<std::ptrdiff_t>((j + 1) * d * d)));
    }
    m.ll_history = c.get<double>(prefix + ".ll_history");
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-10) throw ConsistencyError(prefix + ": weights do not sum to 1");
    return m;
}

}  // namespace gpd::genlab
