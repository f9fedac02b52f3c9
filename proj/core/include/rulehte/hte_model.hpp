#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "rulehte/basis.hpp"

namespace rulehte {

struct FitMeta {
    std::string learner = "gbm";
    std::string ensemble = "group_lasso";
    double lambda = 0.0;
    std::uint64_t seed = 0;
};

/// Shared-basis outcome model
///   mu(x, t) = b0[t] + sum_g coef[g, t] b_g(x)
/// with training supports and linear-term SDs frozen for importance.
struct FittedModel {
    BasisSet basis;
    Eigen::VectorXd intercepts;     ///< T+1
    Eigen::MatrixXd coef;           ///< n_groups x (T+1)
    Eigen::VectorXd supports;       ///< one per rule
    Eigen::VectorXd linear_sds;     ///< one per linear term (SD of the applied term)
    std::vector<std::string> names; ///< covariate names, length p
    FitMeta meta;

    int T() const noexcept { return static_cast<int>(intercepts.size()) - 1; }
    int p() const noexcept { return static_cast<int>(names.size()); }

    /// Throws DimensionError when the parts disagree in shape.
    void validate() const;

    double predict_outcome(std::span<const double> x, int t) const;
    /// HTE of arm t >= 1 against control from coefficient differences.
    double predict_hte(std::span<const double> x, int t) const;
    /// Difference in HTE between arms t1 and t2 (either may be 0).
    double pairwise_hte(std::span<const double> x, int t1, int t2) const;

    /// n x (T+1) outcome predictions.
    Eigen::MatrixXd predict_outcomes(const Eigen::MatrixXd& x) const;
    /// n x T HTE predictions for arms 1..T.
    Eigen::MatrixXd predict_hte_rows(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd pairwise_rows(const Eigen::MatrixXd& x, int t1, int t2) const;

    /// Importance of every basis function for the contrast t1 vs t2:
    /// |coef diff| sqrt(s (1 - s)) for rules, |coef diff| SD for linear terms.
    Eigen::VectorXd base_importance(int t1, int t2) const;
    /// Per covariate: its linear term's importance plus each rule's
    /// importance divided by the number of covariates the rule uses.
    Eigen::VectorXd variable_importance(int t1, int t2) const;

    /// Number of basis functions with a nonzero coefficient row.
    int count_terms() const;
};

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const FittedModel& m);
FittedModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const FittedModel& m);
FittedModel load_model(const std::string& path);

/// Active terms, most important first. Columns: kind, definition, t1, t2,
/// importance, support, coef_arm0..coef_armT.
void write_importance(std::ostream& out, const FittedModel& m, int t1, int t2);
/// Columns: variable, t1, t2, importance.
void write_variable_importance(std::ostream& out, const FittedModel& m, int t1, int t2);

}  // namespace rulehte
