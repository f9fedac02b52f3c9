#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/rule.hpp"

namespace rulehte {

/// Winsorized, rescaled covariate: scale * clamp(x[var], lower, upper).
struct LinearTerm {
    int var = 0;
    double lower = 0.0;
    double upper = 0.0;
    double scale = 1.0;

    bool operator==(const LinearTerm&) const = default;
};

double apply_linear_term(const LinearTerm& term, double x);

struct LinearTermFit {
    std::vector<LinearTerm> terms;
    std::vector<int> dropped;  ///< covariates skipped because their winsorized SD is 0
};

/// Quantile by linear interpolation between order statistics
/// (h = (n-1) prob). `values` need not be sorted.
double quantile(std::vector<double> values, double prob);

/// One term per covariate with bounds at the q and 1-q quantiles and scale
/// 0.4 / SD (sample SD of the winsorized column). Constant columns are dropped.
LinearTermFit fit_linear_terms(const Dataset& data, double q = 0.025);

/// Rules followed by linear terms; one basis function per group.
struct BasisSet {
    std::vector<RuleTerm> rules;
    std::vector<LinearTerm> linears;

    int n_rules() const noexcept { return static_cast<int>(rules.size()); }
    int n_groups() const noexcept { return static_cast<int>(rules.size() + linears.size()); }

    /// Values of every basis function at one covariate vector.
    Eigen::VectorXd evaluate(std::span<const double> x) const;
    /// n x n_groups matrix of basis values.
    Eigen::MatrixXd evaluate_rows(const Eigen::MatrixXd& x) const;

    std::string describe(int g, const std::vector<std::string>& names) const;
};

/// Arm-masked design for group-wise regularization.
///
/// Group g, arm t is the column I(w_i = t) b_g(x_i). The intercept block
/// (one indicator column per arm) is implicit: the solver works on columns
/// centered within each arm, which projects out the unpenalized intercepts
/// and keeps the arm columns of a group exactly orthogonal. Only the arm-w_i
/// entry of a row is nonzero, so the standardized design is stored as one
/// value per (row, group).
class GroupedDesign {
public:
    GroupedDesign() = default;
    /// `basis` is n x G of basis values; w holds arms in 0..T.
    GroupedDesign(Eigen::MatrixXd basis, std::vector<int> w, int T, bool standardize = true);

    int n() const noexcept { return static_cast<int>(basis_.rows()); }
    int n_groups() const noexcept { return static_cast<int>(basis_.cols()); }
    int T() const noexcept { return T_; }
    int arms() const noexcept { return T_ + 1; }
    bool standardized() const noexcept { return standardize_; }

    const Eigen::MatrixXd& basis() const noexcept { return basis_; }
    const std::vector<int>& w() const noexcept { return w_; }
    const std::vector<int>& arm_counts() const noexcept { return arm_counts_; }

    /// Mean and population SD of each masked column over all n rows (G x (T+1)).
    const Eigen::MatrixXd& column_mean() const noexcept { return col_mean_; }
    const Eigen::MatrixXd& column_sd() const noexcept { return col_sd_; }
    /// Mean of b_g within arm t (0 where the arm is empty).
    const Eigen::MatrixXd& arm_mean() const noexcept { return arm_mean_; }
    /// Divisor applied to group g, arm t: the column SD when standardizing,
    /// else 1. Zero marks a column fixed at 0.
    const Eigen::MatrixXd& scale() const noexcept { return scale_; }
    /// Squared norm of each centered, scaled column.
    const Eigen::MatrixXd& sq_norm() const noexcept { return sq_norm_; }
    /// Centered, scaled value of row i in group g (its arm-w_i column).
    const Eigen::MatrixXd& values() const noexcept { return values_; }

    /// Raw masked columns of one group (n x (T+1)).
    Eigen::MatrixXd group_columns(int g) const;

    /// Design restricted to `rows`, with statistics recomputed on them.
    GroupedDesign subset(std::span<const int> rows) const;

private:
    Eigen::MatrixXd basis_;
    std::vector<int> w_;
    int T_ = 1;
    bool standardize_ = true;
    std::vector<int> arm_counts_;
    Eigen::MatrixXd col_mean_, col_sd_, arm_mean_, scale_, sq_norm_;
    Eigen::MatrixXd values_;
};

GroupedDesign build_grouped_design(const Dataset& data, const BasisSet& basis, bool standardize = true);

}  // namespace rulehte
