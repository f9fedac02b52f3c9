#include "rulehte/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rulehte/error.hpp"
#include "rulehte/parallel.hpp"
#include "rulehte/rng.hpp"

namespace rulehte {

std::string to_string(EnsembleMethod m) {
    return m == EnsembleMethod::group_lasso ? "group_lasso" : "adaptive_group_lasso";
}

EnsembleMethod ensemble_method_from_string(const std::string& s) {
    if (s == "group_lasso" || s == "gl") return EnsembleMethod::group_lasso;
    if (s == "adaptive_group_lasso" || s == "adaptive" || s == "agl") return EnsembleMethod::adaptive_group_lasso;
    throw ConfigError("unknown ensemble method '" + s + "' (expected group_lasso or adaptive_group_lasso)");
}

double penalty_multiplier(int T, GroupSizeFactor f) {
    return std::sqrt(static_cast<double>(f == GroupSizeFactor::sqrt_T ? T : T + 1));
}

namespace {

// Per-arm means of y; arms absent from the design fall back to the overall mean.
Eigen::VectorXd arm_means(const GroupedDesign& d, const Eigen::VectorXd& y) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d.arms());
    for (int i = 0; i < d.n(); ++i) sum[d.w()[i]] += y[i];
    const double overall = y.mean();
    for (int t = 0; t < d.arms(); ++t) {
        sum[t] = d.arm_counts()[t] > 0 ? sum[t] / d.arm_counts()[t] : overall;
    }
    return sum;
}

void check_inputs(const GroupedDesign& d, const Eigen::VectorXd& y, const Eigen::VectorXd& weights) {
    if (y.size() != d.n()) throw DimensionError("outcome length differs from design rows");
    if (weights.size() != d.n_groups()) throw DimensionError("penalty weight count differs from group count");
    for (Eigen::Index g = 0; g < weights.size(); ++g) {
        if (!(weights[g] >= 0.0)) throw ConfigError("penalty weights must be nonnegative");
    }
    if (!y.allFinite()) throw DataError("outcome contains non-finite values");
}

// Per-arm inner products of group g's standardized column with r.
void arm_products(const GroupedDesign& d, int g, const Eigen::VectorXd& r, Eigen::VectorXd& out) {
    out.setZero();
    const double* v = d.values().col(g).data();
    const int* w = d.w().data();
    for (int i = 0; i < d.n(); ++i) out[w[i]] += v[i] * r[i];
}

// Minimizer of 1/2 sum_t d_t b_t^2 - u_t b_t + kappa ||b||, i.e. the exact
// update of one group whose arm columns are mutually orthogonal.
void group_update(const Eigen::VectorXd& u, const Eigen::VectorXd& dsq, double kappa, Eigen::VectorXd& beta) {
    const int A = static_cast<int>(u.size());
    const double unorm = u.norm();
    if (unorm <= kappa) {
        beta.setZero();
        return;
    }
    bool equal = true;
    double dref = -1.0;
    for (int t = 0; t < A; ++t) {
        if (dsq[t] <= 0.0) continue;
        if (dref < 0.0) {
            dref = dsq[t];
        } else if (std::abs(dsq[t] - dref) > 1e-14 * dref) {
            equal = false;
        }
    }
    if (dref < 0.0) {
        beta.setZero();
        return;
    }
    if (equal) {
        const double shrink = 1.0 - kappa / unorm;
        for (int t = 0; t < A; ++t) beta[t] = dsq[t] > 0.0 ? shrink * u[t] / dsq[t] : 0.0;
        return;
    }
    if (kappa == 0.0) {
        for (int t = 0; t < A; ++t) beta[t] = dsq[t] > 0.0 ? u[t] / dsq[t] : 0.0;
        return;
    }
    // Solve sum_t u_t^2 / (d_t s + kappa)^2 = 1 for s = ||beta||. The left
    // side is convex and decreasing, so Newton from s = 0 increases
    // monotonically to the root.
    double s = 0.0;
    for (int it = 0; it < 200; ++it) {
        double phi = -1.0, dphi = 0.0;
        for (int t = 0; t < A; ++t) {
            if (dsq[t] <= 0.0) continue;
            const double den = dsq[t] * s + kappa;
            const double q = u[t] * u[t] / (den * den);
            phi += q;
            dphi -= 2.0 * q * dsq[t] / den;
        }
        if (dphi >= 0.0) break;
        const double step = phi / dphi;
        s -= step;
        if (std::abs(step) <= 1e-15 * std::max(1.0, s)) break;
    }
    for (int t = 0; t < A; ++t) beta[t] = dsq[t] > 0.0 ? u[t] * s / (dsq[t] * s + kappa) : 0.0;
}

class Bcd {
public:
    Bcd(const GroupedDesign& d, const Eigen::VectorXd& y, double lambda, const Eigen::VectorXd& weights,
        const SolverOptions& opts)
        : d_(d), weights_(weights), opts_(opts),
          mult_(lambda * penalty_multiplier(d.T(), opts.size_factor)), means_(arm_means(d, y)) {
        r_.resize(d.n());
        for (int i = 0; i < d.n(); ++i) r_[i] = y[i] - means_[d.w()[i]];
        y_scale_ = std::max(r_.norm(), std::numeric_limits<double>::min());
        beta_ = Eigen::MatrixXd::Zero(d.n_groups(), d.arms());
        u_.resize(d.arms());
        b_.resize(d.arms());
        delta_.resize(d.arms());
    }

    void warm_start(const Eigen::MatrixXd& beta) {
        if (beta.rows() != d_.n_groups() || beta.cols() != d_.arms()) {
            throw DimensionError("warm start has the wrong shape");
        }
        for (int g = 0; g < d_.n_groups(); ++g) {
            if (std::isinf(weights_[g])) continue;
            for (int t = 0; t < d_.arms(); ++t) {
                if (d_.sq_norm()(g, t) > 0.0) beta_(g, t) = beta(g, t);
            }
            apply_change(g, beta_.row(g).transpose());
        }
    }

    GroupLassoFit run(double lambda) {
        GroupLassoFit fit;
        fit.lambda = lambda;
        fit.weights = weights_;
        std::vector<int> all(d_.n_groups());
        std::iota(all.begin(), all.end(), 0);
        std::vector<int> active;
        int sweeps = 0;
        bool converged = false;
        while (sweeps < opts_.max_sweeps) {
            double change = sweep(all);
            ++sweeps;
            trace(fit);
            if (change < opts_.tol) {
                converged = true;
                break;
            }
            active.clear();
            for (int g = 0; g < d_.n_groups(); ++g) {
                if (beta_.row(g).squaredNorm() > 0.0) active.push_back(g);
            }
            while (sweeps < opts_.max_sweeps) {
                change = sweep(active);
                ++sweeps;
                trace(fit);
                if (change < opts_.tol) break;
            }
        }
        fit.converged = converged;
        fit.sweeps = sweeps;
        finish(fit);
        return fit;
    }

private:
    double kappa(int g) const { return mult_ * weights_[g]; }

    void apply_change(int g, const Eigen::VectorXd& delta) {
        if (delta.squaredNorm() == 0.0) return;
        const double* v = d_.values().col(g).data();
        const int* w = d_.w().data();
        for (int i = 0; i < d_.n(); ++i) r_[i] -= v[i] * delta[w[i]];
    }

    double sweep(const std::vector<int>& groups) {
        double max_change = 0.0;
        for (int g : groups) {
            if (std::isinf(weights_[g])) continue;
            arm_products(d_, g, r_, u_);
            for (int t = 0; t < d_.arms(); ++t) u_[t] += d_.sq_norm()(g, t) * beta_(g, t);
            group_update(u_, d_.sq_norm().row(g).transpose(), kappa(g), b_);
            delta_ = b_ - beta_.row(g).transpose();
            double moved = 0.0;
            for (int t = 0; t < d_.arms(); ++t) moved += d_.sq_norm()(g, t) * delta_[t] * delta_[t];
            max_change = std::max(max_change, moved);
            apply_change(g, delta_);
            beta_.row(g) = b_.transpose();
        }
        return std::sqrt(max_change) / y_scale_;
    }

    double objective() const {
        double pen = 0.0;
        for (int g = 0; g < d_.n_groups(); ++g) {
            if (std::isinf(weights_[g]) || weights_[g] == 0.0) continue;
            double nb = beta_.row(g).norm();
            if (nb > 0.0) pen += kappa(g) * nb;
        }
        return 0.5 * r_.squaredNorm() + pen;
    }

    void trace(GroupLassoFit& fit) const {
        if (opts_.record_trace) fit.objective_trace.push_back(objective());
    }

    void finish(GroupLassoFit& fit) {
        const int G = d_.n_groups();
        const int A = d_.arms();
        fit.beta = beta_;
        fit.objective = objective();
        double kkt = 0.0;
        for (int g = 0; g < G; ++g) {
            if (std::isinf(weights_[g])) continue;
            arm_products(d_, g, r_, u_);
            const double k = kappa(g);
            const double nb = beta_.row(g).norm();
            if (nb > 0.0) {
                Eigen::VectorXd res = u_ - k * beta_.row(g).transpose() / nb;
                for (int t = 0; t < A; ++t) {
                    if (d_.sq_norm()(g, t) <= 0.0) res[t] = 0.0;
                }
                kkt = std::max(kkt, res.norm());
                fit.active_groups.push_back(g);
            } else {
                kkt = std::max(kkt, std::max(0.0, u_.norm() - k));
            }
        }
        fit.kkt_residual = kkt;
        fit.coef = Eigen::MatrixXd::Zero(G, A);
        fit.intercepts = means_;
        for (int g = 0; g < G; ++g) {
            for (int t = 0; t < A; ++t) {
                const double s = d_.scale()(g, t);
                if (s > 0.0 && beta_(g, t) != 0.0) {
                    fit.coef(g, t) = beta_(g, t) / s;
                    fit.intercepts[t] -= fit.coef(g, t) * d_.arm_mean()(g, t);
                }
            }
        }
    }

    const GroupedDesign& d_;
    Eigen::VectorXd weights_;
    SolverOptions opts_;
    double mult_;
    Eigen::VectorXd means_;
    Eigen::VectorXd r_;
    double y_scale_ = 1.0;
    Eigen::MatrixXd beta_;
    Eigen::VectorXd u_, b_, delta_;
};

}  // namespace

double lambda_max(const GroupedDesign& design, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                  GroupSizeFactor f) {
    check_inputs(design, y, weights);
    if (design.n_groups() == 0) throw ConfigError("lambda_max: design has no groups");
    const Eigen::VectorXd means = arm_means(design, y);
    Eigen::VectorXd r(design.n());
    for (int i = 0; i < design.n(); ++i) r[i] = y[i] - means[design.w()[i]];
    const double mult = penalty_multiplier(design.T(), f);
    Eigen::VectorXd u(design.arms());
    double best = 0.0;
    bool any = false;
    for (int g = 0; g < design.n_groups(); ++g) {
        if (std::isinf(weights[g])) continue;
        any = true;
        if (weights[g] == 0.0) continue;
        arm_products(design, g, r, u);
        best = std::max(best, u.norm() / (mult * weights[g]));
    }
    if (!any) throw ConfigError("lambda_max: every group has infinite penalty weight");
    return best;
}

double lambda_max(const GroupedDesign& design, const Eigen::VectorXd& y, GroupSizeFactor f) {
    return lambda_max(design, y, Eigen::VectorXd::Ones(design.n_groups()), f);
}

std::vector<double> lambda_path(double lmax, int length, double ratio) {
    if (length < 1) throw ConfigError("lambda path length must be >= 1");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("lambda path ratio must lie in (0, 1]");
    if (!(lmax >= 0.0) || !std::isfinite(lmax)) throw NumericalError("lambda_max is not finite");
    if (lmax == 0.0) return {0.0};
    std::vector<double> path(length);
    const double step = length > 1 ? std::log(ratio) / (length - 1) : 0.0;
    for (int k = 0; k < length; ++k) path[k] = lmax * std::exp(step * k);
    return path;
}

GroupLassoFit group_lasso_fit(const GroupedDesign& design, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& weights, const SolverOptions& opts, const Eigen::MatrixXd* warm) {
    check_inputs(design, y, weights);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!(opts.tol > 0.0)) throw ConfigError("solver tolerance must be > 0");
    Bcd bcd(design, y, lambda, weights, opts);
    if (warm != nullptr) bcd.warm_start(*warm);
    return bcd.run(lambda);
}

GroupLassoFit group_lasso_fit(const GroupedDesign& design, const Eigen::VectorXd& y, double lambda,
                              const SolverOptions& opts) {
    return group_lasso_fit(design, y, lambda, Eigen::VectorXd::Ones(design.n_groups()), opts);
}

std::vector<GroupLassoFit> group_lasso_path(const GroupedDesign& design, const Eigen::VectorXd& y,
                                            const std::vector<double>& lambdas, const Eigen::VectorXd& weights,
                                            const SolverOptions& opts) {
    std::vector<GroupLassoFit> fits;
    fits.reserve(lambdas.size());
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        const Eigen::MatrixXd* warm = k > 0 ? &fits.back().beta : nullptr;
        fits.push_back(group_lasso_fit(design, y, lambdas[k], weights, opts, warm));
    }
    return fits;
}

Eigen::VectorXd predict_design(const GroupLassoFit& fit, const Eigen::MatrixXd& basis, const std::vector<int>& w) {
    if (basis.cols() != fit.coef.rows() || static_cast<Eigen::Index>(w.size()) != basis.rows()) {
        throw DimensionError("predict_design: shape mismatch");
    }
    Eigen::VectorXd out(basis.rows());
    for (Eigen::Index i = 0; i < basis.rows(); ++i) {
        const int t = w[i];
        if (t < 0 || t >= fit.coef.cols()) throw DimensionError("predict_design: arm out of range");
        out[i] = fit.intercepts[t] + basis.row(i).dot(fit.coef.col(t));
    }
    return out;
}

std::vector<int> stratified_folds(const std::vector<int>& w, int arms, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (static_cast<int>(w.size()) < folds) throw ConfigError("more folds than rows");
    std::vector<std::vector<int>> by_arm(arms);
    for (std::size_t i = 0; i < w.size(); ++i) by_arm.at(w[i]).push_back(static_cast<int>(i));
    Rng rng(seed);
    std::vector<int> fold(w.size(), 0);
    int offset = 0;
    for (auto& rows : by_arm) {
        std::shuffle(rows.begin(), rows.end(), rng);
        for (std::size_t k = 0; k < rows.size(); ++k) fold[rows[k]] = static_cast<int>((offset + k) % folds);
        offset = static_cast<int>((offset + rows.size()) % folds);
    }
    return fold;
}

CvResult cv_select(const GroupedDesign& design, const Eigen::VectorXd& y, const std::vector<double>& lambdas,
                   const Eigen::VectorXd& weights, const SolverOptions& solver, const CvOptions& cv) {
    check_inputs(design, y, weights);
    if (lambdas.empty()) throw ConfigError("cross-validation needs a non-empty lambda path");
    for (std::size_t k = 1; k < lambdas.size(); ++k) {
        if (lambdas[k] > lambdas[k - 1]) throw ConfigError("lambda path must be non-increasing");
    }
    CvResult out;
    out.lambdas = lambdas;
    const int L = static_cast<int>(lambdas.size());
    if (L == 1) {
        out.mean_error.assign(1, std::numeric_limits<double>::quiet_NaN());
        out.se_error.assign(1, std::numeric_limits<double>::quiet_NaN());
        out.best_index = 0;
        out.best_lambda = lambdas[0];
        return out;
    }
    const int n = design.n();
    const std::vector<int> fold = stratified_folds(design.w(), design.arms(), cv.folds, cv.seed);
    Eigen::MatrixXd sse(cv.folds, L);
    std::vector<int> test_count(cv.folds, 0);
    std::vector<std::vector<std::string>> fold_warnings(cv.folds);

    parallel_for(cv.folds, cv.jobs, [&](int k) {
        std::vector<int> train, test;
        for (int i = 0; i < n; ++i) (fold[i] == k ? test : train).push_back(i);
        test_count[k] = static_cast<int>(test.size());
        GroupedDesign sub = design.subset(train);
        for (int t = 0; t < design.arms(); ++t) {
            if (sub.arm_counts()[t] == 0) {
                fold_warnings[k].push_back("fold " + std::to_string(k + 1) + ": training rows lack arm " +
                                           std::to_string(t) + "; its intercept falls back to the overall mean");
            }
        }
        Eigen::VectorXd ytr(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) ytr[i] = y[train[i]];
        Eigen::MatrixXd btest(test.size(), design.n_groups());
        std::vector<int> wtest(test.size());
        Eigen::VectorXd ytest(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            btest.row(i) = design.basis().row(test[i]);
            wtest[i] = design.w()[test[i]];
            ytest[i] = y[test[i]];
        }
        const double factor = static_cast<double>(train.size()) / n;
        Eigen::MatrixXd warm;
        for (int l = 0; l < L; ++l) {
            GroupLassoFit f = group_lasso_fit(sub, ytr, lambdas[l] * factor, weights, solver, l > 0 ? &warm : nullptr);
            sse(k, l) = (predict_design(f, btest, wtest) - ytest).squaredNorm();
            warm = std::move(f.beta);
        }
    });

    for (auto& fw : fold_warnings) out.warnings.insert(out.warnings.end(), fw.begin(), fw.end());
    out.mean_error.resize(L);
    out.se_error.resize(L);
    for (int l = 0; l < L; ++l) {
        out.mean_error[l] = sse.col(l).sum() / n;
        double m = 0.0;
        int used = 0;
        std::vector<double> fe;
        for (int k = 0; k < cv.folds; ++k) {
            if (test_count[k] == 0) continue;
            fe.push_back(sse(k, l) / test_count[k]);
            m += fe.back();
            ++used;
        }
        m /= std::max(1, used);
        double ss = 0.0;
        for (double e : fe) ss += (e - m) * (e - m);
        out.se_error[l] = used > 1 ? std::sqrt(ss / (used - 1) / used) : 0.0;
    }
    int best = 0;
    for (int l = 1; l < L; ++l) {
        if (out.mean_error[l] < out.mean_error[best]) best = l;
    }
    out.best_index = best;
    out.best_lambda = lambdas[best];
    return out;
}

Eigen::VectorXd adaptive_weights(const GroupLassoFit& stage1) {
    Eigen::VectorXd w(stage1.beta.rows());
    for (Eigen::Index g = 0; g < w.size(); ++g) {
        const double nb = stage1.beta.row(g).norm();
        w[g] = nb > 0.0 ? 1.0 / nb : kInf;
    }
    return w;
}

namespace {

struct StageResult {
    GroupLassoFit fit;
    CvResult cv;
};

StageResult run_stage(const GroupedDesign& design, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                      const EnsembleConfig& cfg) {
    const double lmax = lambda_max(design, y, weights, cfg.solver.size_factor);
    const auto path = lambda_path(lmax, cfg.path_length, cfg.path_ratio);
    StageResult out;
    out.cv = cv_select(design, y, path, weights, cfg.solver, cfg.cv);
    std::vector<double> head(path.begin(), path.begin() + out.cv.best_index + 1);
    auto fits = group_lasso_path(design, y, head, weights, cfg.solver);
    out.fit = std::move(fits.back());
    return out;
}

}  // namespace

EnsembleResult adaptive_group_lasso(const GroupedDesign& design, const Eigen::VectorXd& y, EnsembleConfig cfg) {
    cfg.method = EnsembleMethod::adaptive_group_lasso;
    return fit_ensemble(design, y, cfg);
}

EnsembleResult fit_ensemble(const GroupedDesign& design, const Eigen::VectorXd& y, const EnsembleConfig& cfg) {
    if (design.n_groups() == 0) throw ConfigError("ensemble: no basis functions to fit");
    EnsembleResult out;
    StageResult s1 = run_stage(design, y, Eigen::VectorXd::Ones(design.n_groups()), cfg);
    if (cfg.method == EnsembleMethod::group_lasso) {
        out.fit = std::move(s1.fit);
        out.cv = std::move(s1.cv);
        return out;
    }
    const Eigen::VectorXd w = adaptive_weights(s1.fit);
    out.stage1 = s1.fit;
    out.stage1_cv = s1.cv;
    if (s1.fit.active_groups.empty()) {
        out.intercept_only = true;
        out.fit = group_lasso_fit(design, y, 0.0, w, cfg.solver);
        out.cv = s1.cv;
        out.cv.warnings.push_back("adaptive stage 1 selected no groups; final model is intercept-only");
        return out;
    }
    StageResult s2 = run_stage(design, y, w, cfg);
    out.fit = std::move(s2.fit);
    out.cv = std::move(s2.cv);
    return out;
}

nlohmann::json cv_to_json(const CvResult& cv) {
    auto nan_safe = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
        return a;
    };
    return nlohmann::json{{"lambdas", cv.lambdas},
                          {"mean_error", nan_safe(cv.mean_error)},
                          {"se_error", nan_safe(cv.se_error)},
                          {"best_index", cv.best_index},
                          {"best_lambda", cv.best_lambda},
                          {"warnings", cv.warnings}};
}

nlohmann::json fit_to_json(const GroupLassoFit& fit) {
    nlohmann::json coef = nlohmann::json::array();
    for (Eigen::Index g = 0; g < fit.coef.rows(); ++g) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index t = 0; t < fit.coef.cols(); ++t) row.push_back(fit.coef(g, t));
        coef.push_back(std::move(row));
    }
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index g = 0; g < fit.weights.size(); ++g) {
        weights.push_back(std::isfinite(fit.weights[g]) ? nlohmann::json(fit.weights[g]) : nlohmann::json(nullptr));
    }
    return nlohmann::json{{"lambda", fit.lambda},
                          {"intercepts", std::vector<double>(fit.intercepts.data(),
                                                             fit.intercepts.data() + fit.intercepts.size())},
                          {"coef", coef},
                          {"weights", weights},
                          {"objective", fit.objective},
                          {"kkt_residual", fit.kkt_residual},
                          {"active_groups", fit.active_groups},
                          {"converged", fit.converged},
                          {"sweeps", fit.sweeps}};
}

}  // namespace rulehte
