#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rulehte/ensemble.hpp"
#include "rulehte/error.hpp"

using namespace rulehte;

namespace {

struct Instance {
    GroupedDesign design;
    Eigen::VectorXd y;
};

Instance random_instance(std::uint64_t seed, int n, int G, int T, bool standardize = true, int informative = 2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd basis(n, G);
    std::vector<int> w(n);
    for (int i = 0; i < n; ++i) {
        w[i] = i % (T + 1);
        for (int g = 0; g < G; ++g) basis(i, g) = g % 3 == 0 ? static_cast<double>(nd(rng) > 0.3) : nd(rng) * (1 + g);
    }
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = 0.5 * w[i] + nd(rng);
        for (int g = 0; g < std::min(informative, G); ++g) y[i] += (g + 1.0) * (w[i] - 0.7) * basis(i, g) / (1 + g);
    }
    return {GroupedDesign(basis, w, T, standardize), y};
}

SolverOptions tight() {
    SolverOptions o;
    o.tol = 1e-13;
    o.max_sweeps = 1000000;
    return o;
}

}  // namespace

TEST(GroupLasso, MatchesProximalGradientOracle) {
    for (int trial = 0; trial < 20; ++trial) {
        const int T = 1 + trial % 3;
        Instance in = random_instance(100 + trial, 24 + trial % 12, 2 + trial % 5, T, trial % 4 != 3);
        const double lmax = lambda_max(in.design, in.y);
        const double lambda = lmax * (0.05 + 0.1 * (trial % 5));
        Eigen::VectorXd w = Eigen::VectorXd::Ones(in.design.n_groups());
        if (trial % 3 == 1) w[0] = 2.5;
        GroupLassoFit fit = group_lasso_fit(in.design, in.y, lambda, w, tight());
        ASSERT_TRUE(fit.converged);
        const oracle::ExplicitProblem e = oracle::explicit_problem(in.design);
        const auto k = oracle::explicit_kappa(in.design, lambda, w);
        const auto ref = oracle::group_lasso_prox(e.Z, in.y, e.group, k);
        const Eigen::VectorXd theta = oracle::explicit_theta(e, fit, in.design);
        const double obj = oracle::group_lasso_objective(e.Z, in.y, e.group, k, theta);
        EXPECT_NEAR(obj, fit.objective, 1e-9 * std::max(1.0, obj));
        EXPECT_LE(obj, ref.objective + 1e-6) << "trial " << trial;
        EXPECT_LE(fit.kkt_residual, 1e-6);
        EXPECT_LE(oracle::explicit_kkt(e, in.y, theta, k), 1e-6);
    }
}

TEST(GroupLasso, ZeroLambdaIsLeastSquares) {
    for (int trial = 0; trial < 5; ++trial) {
        Instance in = random_instance(200 + trial, 40, 3, 2, trial % 2 == 0);
        GroupLassoFit fit = group_lasso_fit(in.design, in.y, 0.0, tight());
        const oracle::ExplicitProblem e = oracle::explicit_problem(in.design);
        const Eigen::VectorXd ls = oracle::ols(e.Z, in.y);
        const Eigen::VectorXd theta = oracle::explicit_theta(e, fit, in.design);
        EXPECT_LT((theta - ls).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(GroupLasso, AboveLambdaMaxEverythingIsZero) {
    for (int trial = 0; trial < 10; ++trial) {
        Instance in = random_instance(300 + trial, 30, 4, 1 + trial % 3);
        const double lmax = lambda_max(in.design, in.y);
        for (double lambda : {lmax * (1 + 1e-9), lmax * 2}) {
            GroupLassoFit fit = group_lasso_fit(in.design, in.y, lambda);
            EXPECT_TRUE(fit.active_groups.empty());
            EXPECT_EQ(fit.coef.cwiseAbs().maxCoeff(), 0.0);
            for (int t = 0; t < in.design.arms(); ++t) {
                double s = 0.0;
                int c = 0;
                for (int i = 0; i < in.design.n(); ++i) {
                    if (in.design.w()[i] == t) s += in.y[i], ++c;
                }
                EXPECT_NEAR(fit.intercepts[t], s / c, 1e-12);
            }
        }
        GroupLassoFit below = group_lasso_fit(in.design, in.y, lmax * 0.99);
        EXPECT_FALSE(below.active_groups.empty());
    }
}

TEST(GroupLasso, LambdaMaxZeroForOrthogonalResponse) {
    Eigen::MatrixXd basis(4, 1);
    basis << 1, 2, 1, 2;
    Eigen::VectorXd y(4);
    y << 3, 3, -1, -1;  // constant within each arm
    GroupedDesign d(basis, {0, 0, 1, 1}, 1);
    EXPECT_EQ(lambda_max(d, y), 0.0);
    EXPECT_EQ(lambda_path(0.0), std::vector<double>{0.0});
}

TEST(GroupLasso, OrthonormalSingleGroupClosedForm) {
    const double a = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXd basis(4, 1);
    basis << a, -a, a, -a;
    Eigen::VectorXd y(4);
    y << 1, 2, 3, 5;
    GroupedDesign d(basis, {0, 0, 1, 1}, 1, false);
    // hand values: residual from arm means is (-0.5, 0.5, -1, 1)
    const Eigen::Vector2d z(-a, -2 * a);
    EXPECT_NEAR(lambda_max(d, y), z.norm() / std::sqrt(1.0), 1e-15);
    EXPECT_NEAR(lambda_max(d, y), std::sqrt(2.5), 1e-15);
    for (double lambda : {0.0, 0.3, 1.0, 1.5}) {
        GroupLassoFit fit = group_lasso_fit(d, y, lambda, tight());
        const double shrink = std::max(0.0, 1.0 - lambda * 1.0 / z.norm());
        EXPECT_NEAR(fit.coef(0, 0), shrink * z[0], 1e-10);
        EXPECT_NEAR(fit.coef(0, 1), shrink * z[1], 1e-10);
    }
    // three arms, sqrt(T) = sqrt(2)
    Eigen::MatrixXd b3(6, 1);
    b3 << a, -a, a, -a, a, -a;
    Eigen::VectorXd y3(6);
    y3 << 1, 2, 3, 5, 0, 4;
    GroupedDesign d3(b3, {0, 0, 1, 1, 2, 2}, 2, false);
    const Eigen::Vector3d z3(-a, -2 * a, -4 * a);
    EXPECT_NEAR(lambda_max(d3, y3), z3.norm() / std::sqrt(2.0), 1e-14);
    GroupLassoFit fit3 = group_lasso_fit(d3, y3, 1.0, tight());
    const double shrink3 = 1.0 - std::sqrt(2.0) / z3.norm();
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(fit3.coef(0, t), shrink3 * z3[t], 1e-10);
}

TEST(GroupLasso, ObjectiveNonIncreasingAcrossSweeps) {
    Instance in = random_instance(7, 60, 8, 2);
    SolverOptions o = tight();
    o.record_trace = true;
    GroupLassoFit fit = group_lasso_fit(in.design, in.y, lambda_max(in.design, in.y) * 0.1, o);
    ASSERT_GE(fit.objective_trace.size(), 2u);
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
        EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] * (1 + 1e-14));
    }
}

TEST(GroupLasso, WarmAndColdStartsAgree) {
    Instance in = random_instance(8, 50, 6, 2);
    const double lmax = lambda_max(in.design, in.y);
    const auto path = lambda_path(lmax, 20, 0.01);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(6);
    auto warm = group_lasso_path(in.design, in.y, path, w, tight());
    for (std::size_t k = 0; k < path.size(); ++k) {
        GroupLassoFit cold = group_lasso_fit(in.design, in.y, path[k], w, tight());
        EXPECT_NEAR(warm[k].objective, cold.objective, 1e-6);
    }
}

TEST(GroupLasso, InactiveRowsAreExactlyZero) {
    Instance in = random_instance(9, 80, 10, 3, true, 3);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(10);
    w[1] = kInf;
    const double lmax = lambda_max(in.design, in.y, w);
    GroupLassoFit fit = group_lasso_fit(in.design, in.y, lmax * 0.3, w);
    EXPECT_EQ(fit.coef.row(1).cwiseAbs().maxCoeff(), 0.0);
    std::vector<bool> active(10, false);
    for (int g : fit.active_groups) active[g] = true;
    for (int g = 0; g < 10; ++g) {
        if (!active[g]) {
            EXPECT_EQ(fit.beta.row(g).cwiseAbs().maxCoeff(), 0.0);
            EXPECT_EQ(fit.coef.row(g).cwiseAbs().maxCoeff(), 0.0);
        } else {
            EXPECT_GT(fit.beta.row(g).norm(), 0.0);
        }
    }
}

TEST(GroupLasso, OriginalScaleCoefficientsReproduceFittedValues) {
    for (bool standardize : {true, false}) {
        Instance in = random_instance(10, 70, 7, 2, standardize);
        GroupLassoFit fit = group_lasso_fit(in.design, in.y, lambda_max(in.design, in.y) * 0.2, tight());
        const GroupedDesign& d = in.design;
        Eigen::VectorXd means = Eigen::VectorXd::Zero(d.arms());
        for (int i = 0; i < d.n(); ++i) means[d.w()[i]] += in.y[i] / d.arm_counts()[d.w()[i]];
        const Eigen::VectorXd pred = predict_design(fit, d.basis(), d.w());
        for (int i = 0; i < d.n(); ++i) {
            double solver = means[d.w()[i]];
            for (int g = 0; g < d.n_groups(); ++g) solver += d.values()(i, g) * fit.beta(g, d.w()[i]);
            EXPECT_NEAR(pred[i], solver, 1e-10);
        }
    }
}

TEST(GroupLasso, AllInfiniteWeightsRejected) {
    Instance in = random_instance(11, 20, 2, 1);
    EXPECT_THROW(lambda_max(in.design, in.y, Eigen::VectorXd::Constant(2, kInf)), ConfigError);
}

TEST(GroupLasso, SqrtArmsFactorRescalesLambda) {
    Instance in = random_instance(12, 40, 4, 2);
    const double a = lambda_max(in.design, in.y, GroupSizeFactor::sqrt_T);
    const double b = lambda_max(in.design, in.y, GroupSizeFactor::sqrt_arms);
    EXPECT_NEAR(a / b, std::sqrt(3.0 / 2.0), 1e-12);
}

TEST(LambdaPath, LogSpaced) {
    auto p = lambda_path(10.0, 5, 1e-4);
    ASSERT_EQ(p.size(), 5u);
    EXPECT_DOUBLE_EQ(p.front(), 10.0);
    EXPECT_NEAR(p.back(), 1e-3, 1e-15);
    for (std::size_t k = 1; k < p.size(); ++k) EXPECT_NEAR(p[k] / p[k - 1], 0.1, 1e-12);
}

TEST(Cv, StratifiedFoldsBalanceArms) {
    std::vector<int> w;
    for (int i = 0; i < 103; ++i) w.push_back(i % 7 == 0 ? 2 : i % 2);
    auto f = stratified_folds(w, 3, 10, 5);
    EXPECT_EQ(f, stratified_folds(w, 3, 10, 5));
    for (int t = 0; t < 3; ++t) {
        std::vector<int> count(10, 0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (w[i] == t) ++count[f[i]];
        }
        EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1);
    }
    std::vector<int> total(10, 0);
    for (int k : f) ++total[k];
    EXPECT_LE(*std::max_element(total.begin(), total.end()) - *std::min_element(total.begin(), total.end()), 1);
}

TEST(Cv, SingleLambdaPathReturnsIt) {
    Instance in = random_instance(13, 40, 3, 2);
    CvResult cv = cv_select(in.design, in.y, {0.7}, Eigen::VectorXd::Ones(3));
    EXPECT_EQ(cv.best_index, 0);
    EXPECT_EQ(cv.best_lambda, 0.7);
}

TEST(Cv, TiesGoToLargerLambda) {
    Instance in = random_instance(14, 60, 3, 2);
    const double lmax = lambda_max(in.design, in.y);
    // the first two values both give the intercept-only model
    const std::vector<double> path{lmax * 3, lmax * 2, lmax * 1.5};
    CvResult cv = cv_select(in.design, in.y, path, Eigen::VectorXd::Ones(3));
    EXPECT_EQ(cv.mean_error[0], cv.mean_error[1]);
    EXPECT_EQ(cv.best_index, 0);
}

TEST(Cv, PureNoiseSelectsNearLargestLambda) {
    int near_top = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        std::mt19937_64 rng(1000 + r);
        std::normal_distribution<double> nd;
        const int n = 200, G = 20;
        Eigen::MatrixXd basis(n, G);
        std::vector<int> w(n);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            w[i] = i % 3;
            y[i] = nd(rng);
            for (int g = 0; g < G; ++g) basis(i, g) = g % 2 ? nd(rng) : static_cast<double>(nd(rng) > 0);
        }
        GroupedDesign d(basis, w, 2);
        const auto path = lambda_path(lambda_max(d, y));
        CvOptions cvo;
        cvo.seed = r;
        CvResult cv = cv_select(d, y, path, Eigen::VectorXd::Ones(G), {}, cvo);
        if (cv.best_index <= 10) ++near_top;
    }
    EXPECT_GE(near_top, 80) << near_top << " of " << reps;
}

TEST(Cv, UnpenalizedFitOverfits) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    const int n = 60, G = 15;
    Eigen::MatrixXd basis(n, G);
    std::vector<int> w(n);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        w[i] = i % 3;
        for (int g = 0; g < G; ++g) basis(i, g) = nd(rng);
        y[i] = (w[i] - 1) * basis(i, 0) + nd(rng);
    }
    GroupedDesign d(basis, w, 2);
    auto path = lambda_path(lambda_max(d, y), 30, 1e-3);
    path.push_back(0.0);
    CvResult cv = cv_select(d, y, path, Eigen::VectorXd::Ones(G));
    EXPECT_LT(cv.best_index, static_cast<int>(path.size()) - 1);
    EXPECT_GT(cv.mean_error.back(), cv.mean_error[cv.best_index]);
}

TEST(Cv, FoldMissingArmWarns) {
    Instance in = random_instance(15, 40, 2, 2);
    std::vector<int> w = in.design.w();
    for (int& v : w) v = v == 2 ? 1 : v;
    w[5] = 2;  // a single row in arm 2
    GroupedDesign d(in.design.basis(), w, 2);
    const auto path = lambda_path(lambda_max(d, in.y), 5, 0.1);
    CvResult cv = cv_select(d, in.y, path, Eigen::VectorXd::Ones(2));
    EXPECT_FALSE(cv.warnings.empty());
    for (double e : cv.mean_error) EXPECT_TRUE(std::isfinite(e));
}

TEST(Adaptive, WeightsFromStageOne) {
    GroupLassoFit s1;
    s1.beta = Eigen::MatrixXd::Zero(3, 2);
    s1.beta.row(0) << 3, 4;
    s1.beta.row(2) << 0, 0.5;
    Eigen::VectorXd w = adaptive_weights(s1);
    EXPECT_DOUBLE_EQ(w[0], 0.2);
    EXPECT_TRUE(std::isinf(w[1]));
    EXPECT_DOUBLE_EQ(w[2], 2.0);
}

TEST(Adaptive, EqualNormsMatchRescaledPlainFit) {
    Instance in = random_instance(16, 60, 5, 2);
    const double c = 0.37;
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(5, 1.0 / c);
    const double lambda = lambda_max(in.design, in.y) * 0.2;
    GroupLassoFit weighted = group_lasso_fit(in.design, in.y, lambda * c, w, tight());
    GroupLassoFit plain = group_lasso_fit(in.design, in.y, lambda, tight());
    EXPECT_LT((weighted.coef - plain.coef).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(lambda_max(in.design, in.y, w), lambda_max(in.design, in.y) * c, 1e-12);
}

TEST(Adaptive, StageTwoStaysInsideStageOne) {
    for (int seed = 0; seed < 10; ++seed) {
        Instance in = random_instance(500 + seed, 60, 5, 2, true, 2);
        EnsembleConfig cfg;
        cfg.method = EnsembleMethod::adaptive_group_lasso;
        cfg.path_length = 30;
        cfg.cv.seed = seed;
        EnsembleResult r = fit_ensemble(in.design, in.y, cfg);
        ASSERT_TRUE(r.stage1.has_value());
        std::vector<bool> s1(5, false);
        for (int g : r.stage1->active_groups) s1[g] = true;
        for (int g : r.fit.active_groups) EXPECT_TRUE(s1[g]) << "seed " << seed << " group " << g;
        for (int g = 0; g < 5; ++g) {
            if (!s1[g]) {
                EXPECT_TRUE(std::isinf(r.fit.weights[g]));
                EXPECT_EQ(r.fit.coef.row(g).cwiseAbs().maxCoeff(), 0.0);
            }
        }
    }
}

TEST(Adaptive, EmptyStageOneGivesInterceptOnly) {
    Eigen::MatrixXd basis(6, 2);
    basis << 1, 0, 2, 1, 3, 0, 4, 1, 5, 0, 6, 1;
    Eigen::VectorXd y(6);
    y << 1, 2, 1, 2, 1, 2;  // constant within arms
    GroupedDesign d(basis, {0, 1, 0, 1, 0, 1}, 1);
    EnsembleConfig cfg;
    cfg.cv.folds = 3;
    EnsembleResult r = adaptive_group_lasso(d, y, cfg);
    EXPECT_TRUE(r.intercept_only);
    EXPECT_TRUE(r.fit.active_groups.empty());
    EXPECT_NEAR(r.fit.intercepts[0], 1.0, 1e-15);
    EXPECT_NEAR(r.fit.intercepts[1], 2.0, 1e-15);
}

TEST(Ensemble, MethodNames) {
    EXPECT_EQ(ensemble_method_from_string("group_lasso"), EnsembleMethod::group_lasso);
    EXPECT_EQ(ensemble_method_from_string("adaptive_group_lasso"), EnsembleMethod::adaptive_group_lasso);
    EXPECT_THROW(ensemble_method_from_string("lasso"), ConfigError);
    EXPECT_EQ(to_string(EnsembleMethod::adaptive_group_lasso), "adaptive_group_lasso");
}
