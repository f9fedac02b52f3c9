#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "rulehte/dataset.hpp"

namespace rulehte {

struct GpsFitInfo {
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;     ///< mean log-likelihood at the returned coefficients
    double grad_norm = 0.0;  ///< max-norm of the mean log-likelihood gradient
    std::vector<double> loglik_trace;
};

/// Generalized propensity score model: multinomial logit with the control arm
/// as reference class. Row t-1 of `coef` holds (intercept, slopes...) of arm t.
struct GpsModel {
    Eigen::MatrixXd coef;
    double clip_eps = 0.01;
    GpsFitInfo info;

    int T() const noexcept { return static_cast<int>(coef.rows()); }
    int p() const noexcept { return static_cast<int>(coef.cols()) - 1; }

    /// Model with covariate-free probabilities, e.g. a known randomization ratio.
    static GpsModel constant(std::span<const double> probs, int p, double clip_eps = 0.0);
};

struct GpsOptions {
    double tol = 1e-8;
    int max_iter = 200;
    double clip_eps = 0.01;
};

/// Maximum-likelihood fit by damped Newton iterations on internally
/// standardized covariates. Throws DataError when an arm is absent.
GpsModel fit_gps(const Dataset& data, const GpsOptions& opts = {});

/// Mean multinomial log-likelihood of `coef` (T x (p+1)) on `data`.
double gps_loglik(const Dataset& data, const Eigen::MatrixXd& coef);
/// Analytic gradient of gps_loglik with respect to `coef`.
Eigen::MatrixXd gps_gradient(const Dataset& data, const Eigen::MatrixXd& coef);

/// Softmax probabilities over arms 0..T, before clipping.
Eigen::VectorXd predict_gps_raw(const GpsModel& model, std::span<const double> x);

/// Clipped probabilities over arms 0..T.
Eigen::VectorXd predict_gps(const GpsModel& model, std::span<const double> x);

/// n x (T+1) matrix of clipped probabilities for every row of `data`.
Eigen::MatrixXd predict_gps_rows(const GpsModel& model, const Eigen::MatrixXd& x);

/// Raises every entry to at least eps and renormalizes so the vector sums to
/// one while every entry stays in [eps, 1 - eps]. eps = 0 is a no-op.
Eigen::VectorXd clip_probabilities(const Eigen::VectorXd& probs, double eps);

void to_json(nlohmann::json& j, const GpsModel& m);
void from_json(const nlohmann::json& j, GpsModel& m);

}  // namespace rulehte
