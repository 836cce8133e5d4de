#include "gpd/spgd/spgd.hpp"

#include <algorithm>
#include <cmath>

#include "gpd/errors.hpp"
#include "gpd/numkit/matrix.hpp"

namespace gpd::spgd {

using numkit::Matrix;

const char* to_string(BasisKind k) {
    return k == BasisKind::gaussian_kriging ? "gaussian_kriging" : "piecewise_linear";
}

BasisKind basis_kind_from_string(const std::string& s) {
    if (s == "gaussian_kriging") return BasisKind::gaussian_kriging;
    if (s == "piecewise_linear") return BasisKind::piecewise_linear;
    throw ArgumentError("unknown basis kind '" + s + "'");
}

ParametricBasis ParametricBasis::make(BasisKind kind, double lo, double hi, std::size_t size) {
    ParametricBasis b{kind, lo, hi, size, 0.0};
    b.validate();
    return b;
}

std::vector<double> ParametricBasis::centers() const {
    std::vector<double> c(size);
    for (std::size_t k = 0; k < size; ++k) c[k] = lo + spacing() * static_cast<double>(k);
    c.back() = hi;
    return c;
}

double ParametricBasis::effective_correlation_length() const {
    return correlation_length > 0.0 ? correlation_length : 1.5 * spacing();
}

void ParametricBasis::validate() const {
    if (size < 2) throw ArgumentError("basis needs at least two centers");
    if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) throw ArgumentError("basis range must satisfy lo < hi");
    if (!(correlation_length >= 0.0)) throw ArgumentError("correlation length must be nonnegative");
}

std::vector<double> basis_eval(const ParametricBasis& basis, double mu) {
    const double slack = 1e-9 * (basis.hi - basis.lo);
    if (!(mu >= basis.lo - slack && mu <= basis.hi + slack)) {
        throw DomainError("parameter " + std::to_string(mu) + " outside basis range [" + std::to_string(basis.lo) +
                          ", " + std::to_string(basis.hi) + "]");
    }
    const auto c = basis.centers();
    std::vector<double> phi(basis.size, 0.0);
    if (basis.kind == BasisKind::gaussian_kriging) {
        const double ell = basis.effective_correlation_length();
        for (std::size_t k = 0; k < basis.size; ++k) {
            const double r = (mu - c[k]) / ell;
            phi[k] = std::exp(-r * r);
        }
    } else {
        const double t = std::clamp((mu - basis.lo) / basis.spacing(), 0.0, static_cast<double>(basis.size - 1));
        const auto k = std::min(static_cast<std::size_t>(t), basis.size - 2);
        const double frac = t - static_cast<double>(k);
        phi[k] = 1.0 - frac;
        phi[k + 1] = frac;
    }
    return phi;
}

double mode_value(const ParametricBasis& basis, const std::vector<double>& lambda, double mu) {
    const auto phi = basis_eval(basis, mu);
    double s = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) s += phi[k] * lambda[k];
    return s;
}

bool SpgdMode::is_zero() const {
    auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
    return zero(f) || zero(lambda1) || zero(lambda2);
}

namespace {

constexpr std::size_t kSupSamples = 1000;

// Signed value of largest magnitude over a dense sampling of the range.
double signed_sup(const ParametricBasis& basis, const std::vector<double>& lambda) {
    double best = 0.0;
    for (std::size_t s = 0; s < kSupSamples; ++s) {
        const double mu = basis.lo + (basis.hi - basis.lo) * static_cast<double>(s) / (kSupSamples - 1);
        const double v = mode_value(basis, lambda, mu);
        if (std::abs(v) > std::abs(best)) best = v;
    }
    return best;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Matrix basis_rows(const ParametricBasis& basis, const std::vector<double>& mus) {
    Matrix b(mus.size(), basis.size);
    for (std::size_t p = 0; p < mus.size(); ++p) {
        const auto phi = basis_eval(basis, mus[p]);
        std::copy(phi.begin(), phi.end(), b.row(p).begin());
    }
    return b;
}

// Weighted ridge least squares: minimize sum_k (h_k * (B_k . lambda) - t_k)^2.
std::vector<double> weighted_lstsq(const Matrix& b, const std::vector<double>& h, const std::vector<double>& t,
                                   double ridge_rel, bool& degenerate) {
    const std::size_t d = b.cols();
    Matrix a(d, d);
    std::vector<double> rhs(d, 0.0);
    for (std::size_t k = 0; k < b.rows(); ++k) {
        const auto row = b.row(k);
        const double hh = h[k] * h[k];
        for (std::size_t i = 0; i < d; ++i) {
            rhs[i] += h[k] * t[k] * row[i];
            for (std::size_t j = 0; j < d; ++j) a(i, j) += hh * row[i] * row[j];
        }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += a(i, i);
    if (!(trace > 0.0) || !std::isfinite(trace)) {
        degenerate = true;
        return std::vector<double>(d, 0.0);
    }
    return numkit::solve_spd(a, rhs, ridge_rel * trace / static_cast<double>(d));
}

std::vector<double> init_target(const std::vector<double>& mus, double lo, double hi, std::size_t variant) {
    std::vector<double> t(mus.size());
    for (std::size_t k = 0; k < mus.size(); ++k) {
        const double u = (mus[k] - lo) / (hi - lo);
        switch (variant) {
            case 0: t[k] = 1.0; break;
            case 1: t[k] = 0.5 + u; break;
            case 2: t[k] = 1.5 - u; break;
            default: t[k] = 0.25 + (u - 0.5) * (u - 0.5); break;
        }
    }
    return t;
}

}  // namespace

void SeparatedSolution::normalize() {
    for (auto& m : modes) {
        if (m.is_zero()) continue;
        const double s1 = signed_sup(basis1, m.lambda1);
        const double s2 = signed_sup(basis2, m.lambda2);
        if (s1 == 0.0 || s2 == 0.0) continue;
        for (double& v : m.lambda1) v /= s1;
        for (double& v : m.lambda2) v /= s2;
        for (double& v : m.f) v *= s1 * s2;
    }
}

SeparatedSolution fit_spgd(const std::vector<Sample>& samples, const FitConfig& cfg) {
    if (cfg.max_modes == 0 || cfg.max_modes > kModes) throw ArgumentError("max_modes must lie in [1, 3]");
    if (samples.size() < cfg.basis_size) {
        throw ArgumentError("fit_spgd needs at least " + std::to_string(cfg.basis_size) + " samples");
    }
    const std::size_t x_size = samples.front().field.size();
    if (x_size == 0) throw ArgumentError("fit_spgd: empty fields");
    for (const auto& s : samples) {
        if (s.field.size() != x_size) throw ArgumentError("fit_spgd: fields differ in size");
        cfg.ranges.check(s.mu);
    }

    SeparatedSolution sol;
    sol.basis1 = ParametricBasis::make(cfg.basis, cfg.ranges.mu1_min, cfg.ranges.mu1_max, cfg.basis_size);
    sol.basis2 = ParametricBasis::make(cfg.basis, cfg.ranges.mu2_min, cfg.ranges.mu2_max, cfg.basis_size);
    sol.field_size = x_size;
    for (auto& m : sol.modes) {
        m.f.assign(x_size, 0.0);
        m.lambda1.assign(cfg.basis_size, 0.0);
        m.lambda2.assign(cfg.basis_size, 0.0);
    }

    const std::size_t np = samples.size();
    std::vector<double> mu1(np), mu2(np);
    for (std::size_t k = 0; k < np; ++k) {
        mu1[k] = samples[k].mu.mu1;
        mu2[k] = samples[k].mu.mu2;
    }
    const Matrix b1 = basis_rows(sol.basis1, mu1);
    const Matrix b2 = basis_rows(sol.basis2, mu2);
    auto eval_rows = [](const Matrix& b, const std::vector<double>& lambda) {
        std::vector<double> out(b.rows());
        for (std::size_t k = 0; k < b.rows(); ++k) {
            const auto row = b.row(k);
            double s = 0.0;
            for (std::size_t i = 0; i < lambda.size(); ++i) s += row[i] * lambda[i];
            out[k] = s;
        }
        return out;
    };

    std::vector<std::vector<double>> r(np);
    double sse = 0.0;
    for (std::size_t k = 0; k < np; ++k) {
        r[k] = samples[k].field;
        sse += dot(r[k], r[k]);
    }
    const double count = static_cast<double>(np * x_size);
    sol.train_rms.push_back(std::sqrt(sse / count));
    const std::vector<double> ones(np, 1.0);

    for (std::size_t m = 0; m < cfg.max_modes && sse > 0.0; ++m) {
        ModeDiagnostics diag;
        SpgdMode best;
        double best_sse = sse;
        for (std::size_t attempt = 0; attempt < 4; ++attempt) {
            diag.restarts = attempt;
            diag.rms_history.clear();
            bool degenerate = false;
            SpgdMode mode;
            mode.lambda1 = weighted_lstsq(b1, ones, init_target(mu1, cfg.ranges.mu1_min, cfg.ranges.mu1_max, attempt),
                                          cfg.ridge, degenerate);
            mode.lambda2 = weighted_lstsq(b2, ones, init_target(mu2, cfg.ranges.mu2_min, cfg.ranges.mu2_max, attempt),
                                          cfg.ridge, degenerate);
            mode.f.assign(x_size, 0.0);
            double cur = sse;
            double sweep_start = sse;
            std::vector<double> a(np);
            std::size_t sweep = 0;
            auto objective = [&](const std::vector<double>& w, double c) {
                double s = sse;
                for (std::size_t k = 0; k < np; ++k) s += -2.0 * w[k] * a[k] + c * w[k] * w[k];
                return std::max(s, 0.0);
            };
            auto record = [&](double v) {
                const double slack = 1e-6 * std::max(cur, 1e-300) + 1e-12 * sse;
                if (v > cur + slack) {
                    throw NumericalError("fit_spgd: alternating step increased the residual (" + std::to_string(cur) +
                                         " -> " + std::to_string(v) + ")");
                }
                cur = std::min(v, cur);
                diag.rms_history.push_back(std::sqrt(v / count));
            };
            for (sweep = 0; sweep < cfg.max_sweeps && !degenerate; ++sweep) {
                auto m1 = eval_rows(b1, mode.lambda1);
                auto m2 = eval_rows(b2, mode.lambda2);
                std::vector<double> w(np);
                double ww = 0.0;
                for (std::size_t k = 0; k < np; ++k) {
                    w[k] = m1[k] * m2[k];
                    ww += w[k] * w[k];
                }
                if (!(ww > 1e-300)) {
                    degenerate = true;
                    break;
                }
                std::fill(mode.f.begin(), mode.f.end(), 0.0);
                for (std::size_t k = 0; k < np; ++k) {
                    const double wk = w[k] / ww;
                    if (wk == 0.0) continue;
                    for (std::size_t x = 0; x < x_size; ++x) mode.f[x] += r[k][x] * wk;
                }
                const double c = dot(mode.f, mode.f);
                if (!(c > 0.0)) {
                    degenerate = true;
                    break;
                }
                for (std::size_t k = 0; k < np; ++k) a[k] = dot(r[k], mode.f);
                record(objective(w, c));

                // lambda1 with F, M2 fixed: sum_k (h_k B1_k.l - t_k)^2, h = sqrt(c) m2, t = a / sqrt(c)
                std::vector<double> h(np), t(np);
                const double sc = std::sqrt(c);
                for (std::size_t k = 0; k < np; ++k) {
                    h[k] = sc * m2[k];
                    t[k] = a[k] / sc;
                }
                mode.lambda1 = weighted_lstsq(b1, h, t, cfg.ridge, degenerate);
                m1 = eval_rows(b1, mode.lambda1);
                for (std::size_t k = 0; k < np; ++k) w[k] = m1[k] * m2[k];
                record(objective(w, c));

                for (std::size_t k = 0; k < np; ++k) h[k] = sc * m1[k];
                mode.lambda2 = weighted_lstsq(b2, h, t, cfg.ridge, degenerate);
                m2 = eval_rows(b2, mode.lambda2);
                for (std::size_t k = 0; k < np; ++k) w[k] = m1[k] * m2[k];
                const double end = objective(w, c);
                record(end);

                const double change = std::abs(sweep_start - end) / std::max(sweep_start, 1e-300);
                sweep_start = end;
                if (change < cfg.tolerance) {
                    ++sweep;
                    break;
                }
            }
            diag.sweeps = sweep;
            if (!degenerate) {
                best = std::move(mode);
                best_sse = cur;
                break;
            }
        }

        if (best.f.empty() || !(best_sse < sse)) {
            sol.diagnostics.push_back(diag);
            break;
        }
        // Accept: peel the mode off the residual and recompute the SSE exactly.
        const auto m1 = eval_rows(b1, best.lambda1);
        const auto m2 = eval_rows(b2, best.lambda2);
        double new_sse = 0.0;
        for (std::size_t k = 0; k < np; ++k) {
            const double w = m1[k] * m2[k];
            for (std::size_t x = 0; x < x_size; ++x) r[k][x] -= best.f[x] * w;
            new_sse += dot(r[k], r[k]);
        }
        if (new_sse > sse * (1.0 + 1e-9)) throw NumericalError("fit_spgd: accepted mode increased the train residual");
        sse = std::min(new_sse, sse);
        diag.accepted = true;
        sol.diagnostics.push_back(diag);
        sol.modes[m] = std::move(best);
        sol.train_rms.push_back(std::sqrt(sse / count));
    }
    sol.normalize();
    return sol;
}

std::vector<double> evaluate(const SeparatedSolution& sol, const oracle::MaterialPoint& mu) {
    std::vector<double> out(sol.field_size, 0.0);
    const auto phi1 = basis_eval(sol.basis1, mu.mu1);
    const auto phi2 = basis_eval(sol.basis2, mu.mu2);
    for (const auto& m : sol.modes) {
        if (m.f.size() != sol.field_size) throw ConsistencyError("spgd mode field size mismatch");
        double v1 = 0.0, v2 = 0.0;
        for (std::size_t k = 0; k < phi1.size(); ++k) v1 += phi1[k] * m.lambda1[k];
        for (std::size_t k = 0; k < phi2.size(); ++k) v2 += phi2[k] * m.lambda2[k];
        const double w = v1 * v2;
        if (w == 0.0) continue;
        for (std::size_t x = 0; x < out.size(); ++x) out[x] += m.f[x] * w;
    }
    return out;
}

MapeResult mape(const std::vector<std::vector<double>>& predicted, const std::vector<std::vector<double>>& reference) {
    if (reference.empty()) throw ArgumentError("mape needs at least one reference field");
    if (predicted.size() != reference.size()) throw ArgumentError("mape: field count mismatch");
    MapeResult res;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < reference.size(); ++p) {
        if (predicted[p].size() != reference[p].size()) throw ArgumentError("mape: field size mismatch");
        for (std::size_t x = 0; x < reference[p].size(); ++x) {
            if (reference[p][x] == 0.0) {
                ++res.excluded;
                continue;
            }
            sum += std::abs(predicted[p][x] - reference[p][x]) / std::abs(reference[p][x]);
            ++n;
        }
    }
    if (n == 0) throw ArgumentError("mape: every reference value is zero");
    res.percent = 100.0 * sum / static_cast<double>(n);
    return res;
}

MapeResult mape(const SeparatedSolution& sol, const std::vector<Sample>& heldout) {
    std::vector<std::vector<double>> pred, ref;
    for (const auto& s : heldout) {
        pred.push_back(evaluate(sol, s.mu));
        ref.push_back(s.field);
    }
    return mape(pred, ref);
}

}  // namespace gpd::spgd
