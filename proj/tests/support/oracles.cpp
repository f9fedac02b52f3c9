#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rulehte::oracle {

namespace {

Eigen::VectorXd prox(const Eigen::VectorXd& v, const std::vector<int>& group, const std::vector<double>& kappa,
                     double step) {
    Eigen::VectorXd out = v;
    const int G = static_cast<int>(kappa.size());
    for (int g = 0; g < G; ++g) {
        double sq = 0.0;
        for (int j = 0; j < v.size(); ++j) {
            if (group[j] == g) sq += v[j] * v[j];
        }
        const double nrm = std::sqrt(sq);
        double f = 0.0;
        if (std::isfinite(kappa[g]) && nrm > 0.0) f = std::max(0.0, 1.0 - step * kappa[g] / nrm);
        for (int j = 0; j < v.size(); ++j) {
            if (group[j] == g) out[j] = v[j] * f;
        }
    }
    return out;
}

}  // namespace

double group_lasso_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const std::vector<int>& group,
                             const std::vector<double>& kappa, const Eigen::VectorXd& theta) {
    double obj = 0.5 * (y - Z * theta).squaredNorm();
    for (std::size_t g = 0; g < kappa.size(); ++g) {
        double sq = 0.0;
        for (int j = 0; j < theta.size(); ++j) {
            if (group[j] == static_cast<int>(g)) sq += theta[j] * theta[j];
        }
        if (sq == 0.0) continue;
        if (!std::isfinite(kappa[g])) return std::numeric_limits<double>::infinity();
        obj += kappa[g] * std::sqrt(sq);
    }
    return obj;
}

ProxResult group_lasso_prox(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const std::vector<int>& group,
                            const std::vector<double>& kappa, int max_iter, double tol) {
    const Eigen::MatrixXd gram = Z.transpose() * Z;
    const double L = std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff(), 1e-12);
    const double step = 1.0 / L;
    const Eigen::VectorXd zy = Z.transpose() * y;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(Z.cols());
    Eigen::VectorXd mom = theta;
    double t = 1.0;
    double prev = group_lasso_objective(Z, y, group, kappa, theta);
    ProxResult res;
    int it = 0;
    for (; it < max_iter; ++it) {
        const Eigen::VectorXd grad = gram * mom - zy;
        Eigen::VectorXd next = prox(mom - step * grad, group, kappa, step);
        const double obj = group_lasso_objective(Z, y, group, kappa, next);
        if (obj > prev) {
            // restart from the last iterate
            t = 1.0;
            mom = theta;
            continue;
        }
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double move = (next - theta).norm();
        mom = next + ((t - 1.0) / tn) * (next - theta);
        theta = std::move(next);
        t = tn;
        prev = obj;
        if (move < tol * std::max(1.0, theta.norm())) break;
    }
    res.theta = theta;
    res.objective = prev;
    res.iterations = it;
    return res;
}

Eigen::VectorXd ols(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd gram = Z.transpose() * Z;
    return gram.ldlt().solve(Z.transpose() * y);
}

double quantile_type7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    const double h = (n - 1.0) * p + 1.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= v.size()) return v.back();
    return v[lo - 1] + (h - std::floor(h)) * (v[lo] - v[lo - 1]);
}

Moments welford(const Eigen::VectorXd& v) {
    Moments m;
    double m2 = 0.0;
    for (int i = 0; i < v.size(); ++i) {
        const double d = v[i] - m.mean;
        m.mean += d / (i + 1);
        m2 += d * (v[i] - m.mean);
    }
    m.var = v.size() > 0 ? m2 / v.size() : 0.0;
    return m;
}

bool reaches(const Tree& tree, int node, const Eigen::MatrixXd& x, Eigen::Index row) {
    int child = node;
    int parent = tree.nodes[child].parent;
    while (parent >= 0) {
        const TreeNode& p = tree.nodes[parent];
        const bool goes_left = x(row, p.var) < p.threshold;
        if ((p.left == child) != goes_left) return false;
        child = parent;
        parent = p.parent;
    }
    return true;
}

Eigen::VectorXd node_mean(const Tree& tree, int node, const Eigen::MatrixXd& x, const std::vector<int>& rows,
                          const Eigen::MatrixXd& residuals) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(residuals.cols());
    int count = 0;
    for (int r : rows) {
        if (!reaches(tree, node, x, r)) continue;
        sum += residuals.row(r).transpose();
        ++count;
    }
    if (count == 0) throw std::logic_error("empty node");
    return sum / count;
}

ExplicitProblem explicit_problem(const GroupedDesign& d) {
    const int n = d.n(), A = d.arms();
    std::vector<Eigen::VectorXd> cols;
    ExplicitProblem e;
    for (int t = 0; t < A; ++t) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) c[i] = d.w()[i] == t ? 1.0 : 0.0;
        cols.push_back(c);
        e.group.push_back(-1);
        e.cell.emplace_back(-1, t);
    }
    for (int g = 0; g < d.n_groups(); ++g) {
        for (int t = 0; t < A; ++t) {
            const double s = d.scale()(g, t);
            if (!(s > 0.0)) continue;
            Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
            for (int i = 0; i < n; ++i) c[i] = d.w()[i] == t ? d.basis()(i, g) / s : 0.0;
            cols.push_back(c);
            e.group.push_back(g);
            e.cell.emplace_back(g, t);
        }
    }
    e.Z.resize(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) e.Z.col(static_cast<Eigen::Index>(k)) = cols[k];
    return e;
}

Eigen::VectorXd explicit_theta(const ExplicitProblem& e, const GroupLassoFit& f, const GroupedDesign& d) {
    Eigen::VectorXd theta(e.Z.cols());
    for (Eigen::Index k = 0; k < e.Z.cols(); ++k) {
        const auto [g, t] = e.cell[k];
        theta[k] = g < 0 ? f.intercepts[t] : f.coef(g, t) * d.scale()(g, t);
    }
    return theta;
}

std::vector<double> explicit_kappa(const GroupedDesign& d, double lambda, const Eigen::VectorXd& w) {
    std::vector<double> k(d.n_groups());
    for (int g = 0; g < d.n_groups(); ++g) k[g] = lambda * std::sqrt(static_cast<double>(d.T())) * w[g];
    return k;
}

double explicit_kkt(const ExplicitProblem& e, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                    const std::vector<double>& kappa) {
    const Eigen::VectorXd grad = e.Z.transpose() * (y - e.Z * theta);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < e.Z.cols(); ++k) {
        if (e.group[k] < 0) worst = std::max(worst, std::abs(grad[k]));
    }
    for (std::size_t g = 0; g < kappa.size(); ++g) {
        if (!std::isfinite(kappa[g])) continue;
        std::vector<Eigen::Index> idx;
        for (Eigen::Index k = 0; k < e.Z.cols(); ++k) {
            if (e.group[k] == static_cast<int>(g)) idx.push_back(k);
        }
        Eigen::VectorXd u(idx.size()), b(idx.size());
        for (std::size_t m = 0; m < idx.size(); ++m) {
            u[m] = grad[idx[m]];
            b[m] = theta[idx[m]];
        }
        if (b.norm() > 0) worst = std::max(worst, (u - kappa[g] * b / b.norm()).norm());
        else worst = std::max(worst, std::max(0.0, u.norm() - kappa[g]));
    }
    return worst;
}

}  // namespace rulehte::oracle
