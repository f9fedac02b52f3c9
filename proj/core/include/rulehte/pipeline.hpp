#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/ensemble.hpp"
#include "rulehte/hte_model.hpp"
#include "rulehte/propensity.hpp"
#include "rulehte/rulegen.hpp"

namespace rulehte {

/// Every knob of the fitting pipeline. Seeds for boosting and fold
/// assignment are derived from `seed`.
struct FitConfig {
    Learner learner = Learner::gbm;
    EnsembleMethod ensemble = EnsembleMethod::group_lasso;
    int n_trees = 333;
    double mean_size = 2.0;
    double shrinkage = 0.01;
    int min_node_size = 10;
    double subsample_fraction = 0.5;
    double ctree_alpha = 0.05;
    double q = 0.025;
    double clip_eps = 0.01;
    double gps_tol = 1e-8;
    int gps_max_iter = 200;
    /// Known assignment probabilities over arms 0..T; skips GPS estimation.
    std::optional<std::vector<double>> known_gps;
    int cv_folds = 10;
    int path_length = 100;
    double path_ratio = 1e-3;
    double solver_tol = 1e-4;
    int max_sweeps = 100000;
    GroupSizeFactor size_factor = GroupSizeFactor::sqrt_T;
    bool standardize = true;
    std::uint64_t seed = 1;
    int jobs = 1;

    void validate() const;
    BoostConfig boost_config() const;
    EnsembleConfig ensemble_config() const;
};

/// Reads recognised keys from a JSON object on top of `base`; unknown keys
/// raise ConfigError.
FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = {});
nlohmann::json fit_config_to_json(const FitConfig& c);

struct FitReport {
    int n_rules_generated = 0;
    int n_rules_deduped = 0;
    int n_linear = 0;
    std::vector<int> dropped_linear;
    int n_active = 0;
    double lambda = 0.0;
    CvResult cv;
    std::optional<CvResult> stage1_cv;
    bool intercept_only = false;
    bool converged = true;
    double kkt_residual = 0.0;
    GpsFitInfo gps;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct FitOutput {
    FittedModel model;
    FitReport report;
};

/// GPS -> transformed outcomes -> boosting -> rules -> basis -> ensemble.
/// Errors are rethrown with the failing stage named. `gps` overrides both
/// estimation and `known_gps`.
FitOutput fit_model(const Dataset& data, const FitConfig& cfg, const GpsModel* gps = nullptr);

/// Writes lambda, mean_error, se_error (one row per path value).
void write_cv_curve(std::ostream& out, const CvResult& cv);

}  // namespace rulehte
