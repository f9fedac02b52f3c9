#include "rulehte/basis.hpp"

#include <algorithm>
#include <cmath>

#include "rulehte/error.hpp"

namespace rulehte {

double apply_linear_term(const LinearTerm& term, double x) {
    return term.scale * std::min(term.upper, std::max(term.lower, x));
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw DataError("quantile of an empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("quantile probability must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LinearTermFit fit_linear_terms(const Dataset& data, double q) {
    if (!(q >= 0.0 && q < 0.5)) throw ConfigError("winsorizing quantile q must lie in [0, 0.5)");
    LinearTermFit out;
    const int n = data.n();
    for (int j = 0; j < data.p(); ++j) {
        std::vector<double> col(data.x().col(j).data(), data.x().col(j).data() + n);
        LinearTerm term{j, quantile(col, q), quantile(col, 1.0 - q), 1.0};
        double sd = 0.0;
        if (n > 1) {
            double mean = 0.0;
            for (double v : col) mean += apply_linear_term(term, v);
            mean /= n;
            double ss = 0.0;
            for (double v : col) {
                double d = apply_linear_term(term, v) - mean;
                ss += d * d;
            }
            sd = std::sqrt(ss / (n - 1));
        }
        if (!(sd > 1e-12 * std::max(1.0, std::abs(term.upper)))) {
            out.dropped.push_back(j);
            continue;
        }
        term.scale = 0.4 / sd;
        out.terms.push_back(term);
    }
    return out;
}

Eigen::VectorXd BasisSet::evaluate(std::span<const double> x) const {
    Eigen::VectorXd out(n_groups());
    for (std::size_t c = 0; c < rules.size(); ++c) out[c] = rules[c].evaluate(x) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < linears.size(); ++j) {
        const auto& lt = linears[j];
        if (lt.var < 0 || static_cast<std::size_t>(lt.var) >= x.size()) {
            throw DimensionError("linear term references covariate " + std::to_string(lt.var) + " beyond input");
        }
        out[rules.size() + j] = apply_linear_term(lt, x[lt.var]);
    }
    return out;
}

Eigen::MatrixXd BasisSet::evaluate_rows(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), n_groups());
    for (std::size_t c = 0; c < rules.size(); ++c) out.col(c) = rules[c].evaluate_rows(x);
    for (std::size_t j = 0; j < linears.size(); ++j) {
        const auto& lt = linears[j];
        if (lt.var < 0 || lt.var >= x.cols()) {
            throw DimensionError("linear term references covariate " + std::to_string(lt.var) + " beyond input");
        }
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, rules.size() + j) = apply_linear_term(lt, x(i, lt.var));
    }
    return out;
}

std::string BasisSet::describe(int g, const std::vector<std::string>& names) const {
    if (g < 0 || g >= n_groups()) throw DimensionError("basis index out of range");
    if (g < n_rules()) return rules[g].describe(names);
    const auto& lt = linears[g - n_rules()];
    std::string name = lt.var < static_cast<int>(names.size()) ? names[lt.var] : "x" + std::to_string(lt.var + 1);
    return name;
}

GroupedDesign::GroupedDesign(Eigen::MatrixXd basis, std::vector<int> w, int T, bool standardize)
    : basis_(std::move(basis)), w_(std::move(w)), T_(T), standardize_(standardize) {
    const int n = static_cast<int>(basis_.rows());
    const int G = static_cast<int>(basis_.cols());
    if (T_ < 1) throw ConfigError("design needs at least one non-control arm");
    if (static_cast<int>(w_.size()) != n) throw DimensionError("design: arm vector length differs from row count");
    if (n < 1) throw DataError("design: no rows");
    arm_counts_.assign(arms(), 0);
    for (int i = 0; i < n; ++i) {
        if (w_[i] < 0 || w_[i] > T_) {
            throw DimensionError("design: row " + std::to_string(i + 1) + " has arm " + std::to_string(w_[i]) +
                                 " outside 0.." + std::to_string(T_));
        }
        ++arm_counts_[w_[i]];
    }
    const int A = arms();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(G, A);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(G, A);
    for (int g = 0; g < G; ++g) {
        for (int i = 0; i < n; ++i) {
            double v = basis_(i, g);
            sum(g, w_[i]) += v;
            sumsq(g, w_[i]) += v * v;
        }
    }
    col_mean_ = sum / n;
    arm_mean_ = Eigen::MatrixXd::Zero(G, A);
    for (int t = 0; t < A; ++t) {
        if (arm_counts_[t] > 0) arm_mean_.col(t) = sum.col(t) / arm_counts_[t];
    }
    // Population SD of the masked column I(w=t) b_g over all n rows, and the
    // within-arm sum of squares that remains after the intercept is removed.
    col_sd_.resize(G, A);
    Eigen::MatrixXd within(G, A);
    for (int g = 0; g < G; ++g) {
        for (int t = 0; t < A; ++t) {
            double var = sumsq(g, t) / n - col_mean_(g, t) * col_mean_(g, t);
            col_sd_(g, t) = std::sqrt(std::max(0.0, var));
            double nt = arm_counts_[t];
            within(g, t) = nt > 0 ? std::max(0.0, sumsq(g, t) - sum(g, t) * sum(g, t) / nt) : 0.0;
        }
    }
    scale_ = Eigen::MatrixXd::Ones(G, A);
    sq_norm_ = Eigen::MatrixXd::Zero(G, A);
    for (int g = 0; g < G; ++g) {
        double mag = std::max(1.0, basis_.col(g).cwiseAbs().maxCoeff());
        for (int t = 0; t < A; ++t) {
            // Columns that are constant within their arm carry no information
            // beyond the intercept and are held at zero.
            if (!(within(g, t) > 1e-20 * mag * mag * std::max(1, arm_counts_[t]))) {
                scale_(g, t) = 0.0;
                continue;
            }
            if (standardize_) scale_(g, t) = col_sd_(g, t);
            sq_norm_(g, t) = within(g, t) / (scale_(g, t) * scale_(g, t));
        }
    }
    values_.resize(n, G);
    for (int g = 0; g < G; ++g) {
        for (int i = 0; i < n; ++i) {
            int t = w_[i];
            double s = scale_(g, t);
            values_(i, g) = s > 0.0 ? (basis_(i, g) - arm_mean_(g, t)) / s : 0.0;
        }
    }
}

Eigen::MatrixXd GroupedDesign::group_columns(int g) const {
    if (g < 0 || g >= n_groups()) throw DimensionError("group index out of range");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n(), arms());
    for (int i = 0; i < n(); ++i) out(i, w_[i]) = basis_(i, g);
    return out;
}

GroupedDesign GroupedDesign::subset(std::span<const int> rows) const {
    Eigen::MatrixXd b(rows.size(), n_groups());
    std::vector<int> w(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0 || rows[k] >= n()) throw DimensionError("design subset: row index out of range");
        b.row(k) = basis_.row(rows[k]);
        w[k] = w_[rows[k]];
    }
    return GroupedDesign(std::move(b), std::move(w), T_, standardize_);
}

GroupedDesign build_grouped_design(const Dataset& data, const BasisSet& basis, bool standardize) {
    return GroupedDesign(basis.evaluate_rows(data.x()), data.w(), data.T(), standardize);
}

}  // namespace rulehte
