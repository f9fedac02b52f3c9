#pragma once

#include <Eigen/Dense>
#include <compare>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"

namespace rulehte {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// x_var in [lower, upper).
struct Condition {
    int var = 0;
    double lower = -kInf;
    double upper = kInf;

    bool contains(double v) const noexcept { return v >= lower && v < upper; }

    auto operator<=>(const Condition&) const = default;
};

/// Conjunction of interval conditions, at most one per covariate, kept
/// sorted by covariate index.
class RuleTerm {
public:
    RuleTerm() = default;

    /// Builds a rule from conditions, intersecting those on the same
    /// covariate. Throws DomainError on an empty or inverted interval.
    explicit RuleTerm(std::span<const Condition> conditions);
    RuleTerm(std::initializer_list<Condition> conditions);

    /// Intersects `c` into the rule.
    void restrict(const Condition& c);

    const std::vector<Condition>& conditions() const noexcept { return conditions_; }
    bool empty() const noexcept { return conditions_.empty(); }

    /// Number of distinct covariates referenced.
    std::size_t n_variables() const noexcept { return conditions_.size(); }
    bool uses(int var) const noexcept;

    /// 1 iff every condition contains x[var]. Throws DimensionError when a
    /// condition indexes past x.
    bool evaluate(std::span<const double> x) const;
    bool evaluate(const Eigen::MatrixXd& x, Eigen::Index row) const;

    /// Evaluation on every row of x, as 0/1 doubles.
    Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& x) const;

    /// Human-readable form, e.g. "wtkg>=81.76 & wtkg<86.93".
    std::string describe(const std::vector<std::string>& names) const;

    auto operator<=>(const RuleTerm&) const = default;
    bool operator==(const RuleTerm&) const = default;

private:
    std::vector<Condition> conditions_;
};

/// Fraction of rows on which the rule evaluates to 1.
double rule_support(const RuleTerm& rule, const Dataset& data);

}  // namespace rulehte
