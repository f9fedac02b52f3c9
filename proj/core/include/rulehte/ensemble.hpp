#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rulehte/basis.hpp"

namespace rulehte {

enum class EnsembleMethod { group_lasso, adaptive_group_lasso };

std::string to_string(EnsembleMethod m);
EnsembleMethod ensemble_method_from_string(const std::string& s);

/// Multiplier applied to lambda for every group: sqrt(T) as written for the
/// model, or sqrt(T + 1), the number of columns per group.
enum class GroupSizeFactor { sqrt_T, sqrt_arms };

double penalty_multiplier(int T, GroupSizeFactor f);

struct SolverOptions {
    /// Convergence when no group update in a full sweep moves the fitted
    /// values by more than tol * ||y - arm means||.
    double tol = 1e-4;
    int max_sweeps = 100000;
    GroupSizeFactor size_factor = GroupSizeFactor::sqrt_T;
    bool record_trace = false;  ///< keep the objective after every sweep
};

/// Solution of
///   1/2 sum_i (y_i - b0[w_i] - sum_g x~_ig beta~[g, w_i])^2
///     + lambda * m * sum_g weight_g * ||beta~_g||_2
/// in standardized coordinates, where m is the group-size multiplier.
struct GroupLassoFit {
    Eigen::VectorXd intercepts;  ///< per arm, original scale
    Eigen::MatrixXd coef;        ///< G x (T+1), original basis scale
    Eigen::MatrixXd beta;        ///< G x (T+1), standardized scale
    double lambda = 0.0;
    Eigen::VectorXd weights;
    double objective = 0.0;
    double kkt_residual = 0.0;
    std::vector<int> active_groups;
    bool converged = false;
    int sweeps = 0;
    std::vector<double> objective_trace;
};

/// Smallest lambda at which every penalized group is zero. Groups with
/// infinite weight are skipped; zero-weight groups are unpenalized and
/// ignored. Throws ConfigError when every weight is infinite.
double lambda_max(const GroupedDesign& design, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                  GroupSizeFactor f = GroupSizeFactor::sqrt_T);
double lambda_max(const GroupedDesign& design, const Eigen::VectorXd& y,
                  GroupSizeFactor f = GroupSizeFactor::sqrt_T);

/// `length` log-spaced values from lmax down to ratio * lmax.
std::vector<double> lambda_path(double lmax, int length = 100, double ratio = 1e-3);

/// Block coordinate descent. `warm` (G x (T+1), standardized) seeds the
/// coefficients; weights default to 1.
GroupLassoFit group_lasso_fit(const GroupedDesign& design, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& weights, const SolverOptions& opts = {},
                              const Eigen::MatrixXd* warm = nullptr);
GroupLassoFit group_lasso_fit(const GroupedDesign& design, const Eigen::VectorXd& y, double lambda,
                              const SolverOptions& opts = {});

/// Warm-started fits along a decreasing path.
std::vector<GroupLassoFit> group_lasso_path(const GroupedDesign& design, const Eigen::VectorXd& y,
                                            const std::vector<double>& lambdas, const Eigen::VectorXd& weights,
                                            const SolverOptions& opts = {});

/// Fitted values of a fit on an arbitrary basis matrix (n x G) and arms.
Eigen::VectorXd predict_design(const GroupLassoFit& fit, const Eigen::MatrixXd& basis, const std::vector<int>& w);

struct CvOptions {
    int folds = 10;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct CvResult {
    std::vector<double> lambdas;
    std::vector<double> mean_error;  ///< mean held-out squared error per lambda
    std::vector<double> se_error;    ///< standard error across folds
    int best_index = 0;
    double best_lambda = 0.0;
    std::vector<std::string> warnings;
};

/// Fold index per row: rows of each arm are shuffled and dealt round-robin.
std::vector<int> stratified_folds(const std::vector<int>& w, int arms, int folds, std::uint64_t seed);

/// K-fold selection over a decreasing path. Each fold re-standardizes on its
/// training rows and solves with lambda scaled by n_train / n so the penalty
/// keeps its per-observation strength. lambda* minimizes mean held-out
/// error, ties going to the larger lambda.
CvResult cv_select(const GroupedDesign& design, const Eigen::VectorXd& y, const std::vector<double>& lambdas,
                   const Eigen::VectorXd& weights, const SolverOptions& solver = {}, const CvOptions& cv = {});

struct EnsembleConfig {
    EnsembleMethod method = EnsembleMethod::group_lasso;
    int path_length = 100;
    double path_ratio = 1e-3;
    SolverOptions solver;
    CvOptions cv;
};

struct EnsembleResult {
    GroupLassoFit fit;
    CvResult cv;
    std::optional<GroupLassoFit> stage1;
    std::optional<CvResult> stage1_cv;
    bool intercept_only = false;  ///< adaptive stage 1 kept no group
};

/// Adaptive weights 1 / ||beta~_g|| from a stage-1 fit (infinite for zero groups).
Eigen::VectorXd adaptive_weights(const GroupLassoFit& stage1);

/// Plain group lasso, or two-stage adaptive group lasso, each with lambda
/// chosen by cross-validation and the final fit warm-started down the
/// full-data path.
EnsembleResult fit_ensemble(const GroupedDesign& design, const Eigen::VectorXd& y, const EnsembleConfig& cfg);
EnsembleResult adaptive_group_lasso(const GroupedDesign& design, const Eigen::VectorXd& y, EnsembleConfig cfg);

nlohmann::json cv_to_json(const CvResult& cv);
nlohmann::json fit_to_json(const GroupLassoFit& fit);

}  // namespace rulehte
