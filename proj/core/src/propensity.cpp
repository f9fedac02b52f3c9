#include "rulehte/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "rulehte/error.hpp"

namespace rulehte {

namespace {

// Largest standardized coefficient before the fit is declared separated;
// e^-30 is below any probability the data can support.
constexpr double kSeparationBound = 30.0;

void check_clip_eps(double eps, int T) {
    if (!(eps >= 0.0) || eps * (T + 1) >= 1.0) {
        throw ConfigError("clip_eps must lie in [0, 1/(T+1))");
    }
}

// Mean log-likelihood, its gradient and (optionally) the negated Hessian of
// the multinomial logit in the standardized design z = [1, x_std].
struct LogitEval {
    double loglik = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd neg_hess;
};

LogitEval evaluate_logit(const Eigen::MatrixXd& z, const std::vector<int>& w, int T,
                         const Eigen::VectorXd& theta, bool with_hessian) {
    const Eigen::Index n = z.rows();
    const Eigen::Index q = z.cols();
    Eigen::Map<const Eigen::MatrixXd> B(theta.data(), q, T);  // column t-1 = arm t
    Eigen::MatrixXd eta = z * B;                                // n x T
    LogitEval out;
    out.grad = Eigen::VectorXd::Zero(q * T);
    if (with_hessian) out.neg_hess = Eigen::MatrixXd::Zero(q * T, q * T);
    Eigen::VectorXd pi(T);
    for (Eigen::Index i = 0; i < n; ++i) {
        double m = std::max(0.0, eta.row(i).maxCoeff());
        double denom = std::exp(-m);
        for (int t = 0; t < T; ++t) {
            pi[t] = std::exp(eta(i, t) - m);
            denom += pi[t];
        }
        pi /= denom;
        double log_denom = m + std::log(denom);
        out.loglik += (w[i] > 0 ? eta(i, w[i] - 1) : 0.0) - log_denom;
        auto zi = z.row(i).transpose();
        for (int t = 0; t < T; ++t) {
            double resid = (w[i] == t + 1 ? 1.0 : 0.0) - pi[t];
            out.grad.segment(t * q, q) += resid * zi;
        }
        if (with_hessian) {
            Eigen::MatrixXd zz = zi * zi.transpose();
            for (int t = 0; t < T; ++t) {
                for (int s = 0; s < T; ++s) {
                    double c = pi[t] * ((t == s ? 1.0 : 0.0) - pi[s]);
                    out.neg_hess.block(t * q, s * q, q, q) += c * zz;
                }
            }
        }
    }
    out.loglik /= static_cast<double>(n);
    out.grad /= static_cast<double>(n);
    if (with_hessian) out.neg_hess /= static_cast<double>(n);
    return out;
}

}  // namespace

GpsModel GpsModel::constant(std::span<const double> probs, int p, double clip_eps) {
    if (probs.size() < 2) throw ConfigError("known propensities need at least two arms");
    double total = 0.0;
    for (double v : probs) {
        if (!(v > 0.0)) throw ConfigError("known propensities must be positive");
        total += v;
    }
    const int T = static_cast<int>(probs.size()) - 1;
    check_clip_eps(clip_eps, T);
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(T, p + 1);
    for (int t = 1; t <= T; ++t) m.coef(t - 1, 0) = std::log((probs[t] / total) / (probs[0] / total));
    m.clip_eps = clip_eps;
    m.info.converged = true;
    return m;
}

GpsModel fit_gps(const Dataset& data, const GpsOptions& opts) {
    const int T = data.T();
    const int n = data.n();
    const int p = data.p();
    check_clip_eps(opts.clip_eps, T);
    auto counts = data.arm_counts();
    for (int t = 0; t <= T; ++t) {
        if (counts[t] == 0) {
            throw DataError("propensity model: arm " + std::to_string(t) + " has no rows (unfittable class)");
        }
    }

    // Standardize; constant columns are left out of the optimization.
    std::vector<int> active;
    Eigen::VectorXd mean(p), sd(p);
    for (int j = 0; j < p; ++j) {
        mean[j] = data.x().col(j).mean();
        sd[j] = std::sqrt((data.x().col(j).array() - mean[j]).square().mean());
        if (sd[j] > 1e-12 * std::max(1.0, std::abs(mean[j]))) active.push_back(j);
    }
    const int q = static_cast<int>(active.size()) + 1;
    Eigen::MatrixXd z(n, q);
    z.col(0).setOnes();
    for (int k = 0; k + 1 < q; ++k) {
        int j = active[k];
        z.col(k + 1) = (data.x().col(j).array() - mean[j]) / sd[j];
    }

    // Start from the marginal arm frequencies.
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(q * T);
    for (int t = 1; t <= T; ++t) {
        theta[(t - 1) * q] = std::log(static_cast<double>(counts[t]) / counts[0]);
    }

    GpsModel model;
    model.clip_eps = opts.clip_eps;
    auto cur = evaluate_logit(z, data.w(), T, theta, true);
    model.info.loglik_trace.push_back(cur.loglik);
    int iter = 0;
    bool converged = false;
    for (; iter < opts.max_iter; ++iter) {
        if (cur.grad.lpNorm<Eigen::Infinity>() <= opts.tol) {
            converged = true;
            break;
        }
        Eigen::VectorXd dir;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.neg_hess);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            dir = ldlt.solve(cur.grad);
            if (!dir.allFinite() || dir.dot(cur.grad) <= 0.0) dir = cur.grad;
        } else {
            dir = cur.grad;
        }
        const double slope = cur.grad.dot(dir);
        double step = 1.0;
        bool accepted = false;
        LogitEval next;
        for (int halving = 0; halving < 60; ++halving) {
            Eigen::VectorXd trial = theta + step * dir;
            next = evaluate_logit(z, data.w(), T, trial, true);
            if (std::isfinite(next.loglik) && next.loglik >= cur.loglik + 1e-4 * step * slope) {
                theta = std::move(trial);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        cur = std::move(next);
        model.info.loglik_trace.push_back(cur.loglik);
        if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kSeparationBound) break;
    }
    if (!converged && cur.grad.lpNorm<Eigen::Infinity>() <= opts.tol) converged = true;
    // Under (quasi-)separation the gradient vanishes while coefficients on the
    // standardized scale diverge; the MLE does not exist.
    if (theta.cwiseAbs().maxCoeff() > kSeparationBound) converged = false;

    model.coef = Eigen::MatrixXd::Zero(T, p + 1);
    for (int t = 0; t < T; ++t) {
        double intercept = theta[t * q];
        for (int k = 0; k + 1 < q; ++k) {
            int j = active[k];
            double b = theta[t * q + k + 1];
            model.coef(t, j + 1) = b / sd[j];
            intercept -= b * mean[j] / sd[j];
        }
        model.coef(t, 0) = intercept;
    }
    model.info.converged = converged && model.coef.allFinite();
    model.info.iterations = iter;
    model.info.loglik = cur.loglik;
    model.info.grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
    return model;
}

namespace {

LogitEval evaluate_raw(const Dataset& data, const Eigen::MatrixXd& coef) {
    if (coef.rows() != data.T() || coef.cols() != data.p() + 1) {
        throw DimensionError("GPS coefficient matrix must be T x (p+1)");
    }
    Eigen::MatrixXd z(data.n(), data.p() + 1);
    z.col(0).setOnes();
    z.rightCols(data.p()) = data.x();
    const Eigen::MatrixXd bt = coef.transpose();
    const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(bt.data(), bt.size());
    return evaluate_logit(z, data.w(), data.T(), theta, false);
}

}  // namespace

double gps_loglik(const Dataset& data, const Eigen::MatrixXd& coef) {
    return evaluate_raw(data, coef).loglik;
}

Eigen::MatrixXd gps_gradient(const Dataset& data, const Eigen::MatrixXd& coef) {
    const LogitEval e = evaluate_raw(data, coef);
    Eigen::Map<const Eigen::MatrixXd> g(e.grad.data(), data.p() + 1, data.T());
    return g.transpose();
}

Eigen::VectorXd predict_gps_raw(const GpsModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.p()) {
        throw DimensionError("propensity model expects " + std::to_string(model.p()) + " covariates");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw DataError("propensity prediction: non-finite covariate");
    }
    const int T = model.T();
    Eigen::VectorXd eta(T + 1);
    eta[0] = 0.0;
    for (int t = 0; t < T; ++t) {
        double e = model.coef(t, 0);
        for (int j = 0; j < model.p(); ++j) e += model.coef(t, j + 1) * x[j];
        eta[t + 1] = e;
    }
    double m = eta.maxCoeff();
    Eigen::VectorXd prob = (eta.array() - m).exp();
    return prob / prob.sum();
}

Eigen::VectorXd predict_gps(const GpsModel& model, std::span<const double> x) {
    return clip_probabilities(predict_gps_raw(model, x), model.clip_eps);
}

Eigen::MatrixXd predict_gps_rows(const GpsModel& model, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), model.T() + 1);
    std::vector<double> row(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
        out.row(i) = predict_gps(model, row).transpose();
    }
    return out;
}

Eigen::VectorXd clip_probabilities(const Eigen::VectorXd& probs, double eps) {
    if (eps <= 0.0) return probs;
    const Eigen::Index k = probs.size();
    if (eps * k >= 1.0) throw ConfigError("clip_eps too large for the number of arms");
    // Entries pinned at eps; the rest share the remaining mass in proportion
    // to their raw values. Pinning is monotone so this terminates in <= k rounds.
    std::vector<bool> pinned(k, false);
    Eigen::VectorXd out = probs;
    for (Eigen::Index round = 0; round <= k; ++round) {
        double free_mass = 0.0;
        Eigen::Index n_pinned = 0;
        for (Eigen::Index t = 0; t < k; ++t) {
            if (pinned[t]) ++n_pinned;
            else free_mass += probs[t];
        }
        double budget = 1.0 - static_cast<double>(n_pinned) * eps;
        bool changed = false;
        for (Eigen::Index t = 0; t < k; ++t) {
            if (pinned[t]) {
                out[t] = eps;
            } else {
                out[t] = free_mass > 0.0 ? probs[t] * budget / free_mass : budget / static_cast<double>(k - n_pinned);
                if (out[t] < eps) {
                    pinned[t] = true;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    return out;
}

void to_json(nlohmann::json& j, const GpsModel& m) {
    nlohmann::json coef = nlohmann::json::array();
    for (Eigen::Index t = 0; t < m.coef.rows(); ++t) {
        std::vector<double> row(m.coef.cols());
        for (Eigen::Index c = 0; c < m.coef.cols(); ++c) row[c] = m.coef(t, c);
        coef.push_back(row);
    }
    j = nlohmann::json{{"coef", coef},
                       {"clip_eps", m.clip_eps},
                       {"converged", m.info.converged},
                       {"iterations", m.info.iterations},
                       {"loglik", m.info.loglik},
                       {"grad_norm", m.info.grad_norm}};
}

void from_json(const nlohmann::json& j, GpsModel& m) {
    const auto& coef = j.at("coef");
    const auto T = coef.size();
    if (T == 0) throw DataError("propensity JSON: empty coefficient matrix");
    const auto cols = coef.at(0).size();
    m.coef.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(cols));
    for (std::size_t t = 0; t < T; ++t) {
        if (coef[t].size() != cols) throw DataError("propensity JSON: ragged coefficient matrix");
        for (std::size_t c = 0; c < cols; ++c) m.coef(t, c) = coef[t][c].get<double>();
    }
    m.clip_eps = j.value("clip_eps", 0.01);
    m.info.converged = j.value("converged", false);
    m.info.iterations = j.value("iterations", 0);
    m.info.loglik = j.value("loglik", 0.0);
    m.info.grad_norm = j.value("grad_norm", 0.0);
}

}  // namespace rulehte
