#include "rulehte/rule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

RuleTerm::RuleTerm(std::span<const Condition> conditions) {
    for (const auto& c : conditions) restrict(c);
}

RuleTerm::RuleTerm(std::initializer_list<Condition> conditions)
    : RuleTerm(std::span<const Condition>(conditions.begin(), conditions.size())) {}

void RuleTerm::restrict(const Condition& c) {
    if (c.var < 0) throw DimensionError("rule condition has a negative covariate index");
    if (!(c.lower < c.upper)) throw DomainError("rule condition requires lower < upper");
    auto it = std::lower_bound(conditions_.begin(), conditions_.end(), c.var,
                               [](const Condition& a, int v) { return a.var < v; });
    if (it != conditions_.end() && it->var == c.var) {
        double lo = std::max(it->lower, c.lower);
        double hi = std::min(it->upper, c.upper);
        if (!(lo < hi)) throw DomainError("merged rule interval is empty");
        it->lower = lo;
        it->upper = hi;
    } else {
        conditions_.insert(it, c);
    }
}

bool RuleTerm::uses(int var) const noexcept {
    return std::any_of(conditions_.begin(), conditions_.end(),
                       [var](const Condition& c) { return c.var == var; });
}

bool RuleTerm::evaluate(std::span<const double> x) const {
    for (const auto& c : conditions_) {
        if (static_cast<std::size_t>(c.var) >= x.size()) {
            throw DimensionError("rule references covariate " + std::to_string(c.var) +
                                 " but input has " + std::to_string(x.size()));
        }
        if (!c.contains(x[c.var])) return false;
    }
    return true;
}

bool RuleTerm::evaluate(const Eigen::MatrixXd& x, Eigen::Index row) const {
    for (const auto& c : conditions_) {
        if (c.var >= x.cols()) {
            throw DimensionError("rule references covariate " + std::to_string(c.var) +
                                 " but input has " + std::to_string(x.cols()));
        }
        if (!c.contains(x(row, c.var))) return false;
    }
    return true;
}

Eigen::VectorXd RuleTerm::evaluate_rows(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Ones(x.rows());
    for (const auto& c : conditions_) {
        if (c.var >= x.cols()) {
            throw DimensionError("rule references covariate " + std::to_string(c.var) +
                                 " but input has " + std::to_string(x.cols()));
        }
        auto col = x.col(c.var);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (!c.contains(col[i])) out[i] = 0.0;
        }
    }
    return out;
}

std::string RuleTerm::describe(const std::vector<std::string>& names) const {
    std::string out;
    auto name = [&](int v) {
        return static_cast<std::size_t>(v) < names.size() ? names[v] : "x" + std::to_string(v + 1);
    };
    for (const auto& c : conditions_) {
        if (std::isfinite(c.lower)) {
            if (!out.empty()) out += " & ";
            out += name(c.var) + ">=" + csv::format_double(c.lower);
        }
        if (std::isfinite(c.upper)) {
            if (!out.empty()) out += " & ";
            out += name(c.var) + "<" + csv::format_double(c.upper);
        }
    }
    return out.empty() ? "TRUE" : out;
}

double rule_support(const RuleTerm& rule, const Dataset& data) {
    std::size_t hits = 0;
    for (int i = 0; i < data.n(); ++i) {
        if (rule.evaluate(data.x(), i)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.n());
}

}  // namespace rulehte
