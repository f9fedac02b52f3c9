#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rulehte/error.hpp"
#include "rulehte/propensity.hpp"
#include "rulehte/simbench.hpp"

using namespace rulehte;

namespace {

Dataset random_assignment(int n, int p, int T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(n, p);
    std::vector<int> w(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = nd(rng);
        w[i] = i % (T + 1);
    }
    std::shuffle(w.begin(), w.end(), rng);
    return Dataset(Eigen::VectorXd::Zero(n), w, x, {}, T);
}

}  // namespace

TEST(Gps, BalancedIndependentArmsGiveUniformProbabilities) {
    const int n = 3000, p = 2, T = 2;
    Dataset d = random_assignment(n, p, T, 1);
    GpsOptions opts;
    opts.clip_eps = 0.0;
    GpsModel m = fit_gps(d, opts);
    ASSERT_TRUE(m.info.converged);
    const double prob = 1.0 / 3.0;
    const double se = std::sqrt(prob * (1 - prob) / n);
    Eigen::VectorXd mean_x = d.x().colwise().mean().transpose();
    Eigen::VectorXd at_mean = predict_gps(m, std::vector<double>(mean_x.data(), mean_x.data() + p));
    for (int t = 0; t <= T; ++t) EXPECT_NEAR(at_mean[t], prob, 2 * se);
    // average over subjects, with the SE of a fitted value with p + 1 parameters
    const double se_fit = std::sqrt(prob * (1 - prob) * (p + 1) / n);
    Eigen::MatrixXd probs = predict_gps_rows(m, d.x());
    for (int t = 0; t <= T; ++t) {
        EXPECT_LE((probs.col(t).array() - prob).abs().mean(), 2 * se_fit);
    }
}

TEST(Gps, PairedDesignHasZeroSlope) {
    const int T = 2;
    std::vector<double> xs;
    std::vector<int> w;
    for (int k = 0; k < 40; ++k) {
        for (int t = 0; t <= T; ++t) {
            xs.push_back(std::sin(k) * 3.0);
            w.push_back(t);
        }
    }
    Eigen::MatrixXd x = Eigen::Map<Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(xs.size()), 1);
    Dataset d(Eigen::VectorXd::Zero(x.rows()), w, x, {}, T);
    GpsModel m = fit_gps(d);
    ASSERT_TRUE(m.info.converged);
    EXPECT_NEAR(m.coef(0, 1), 0.0, 1e-8);
    EXPECT_NEAR(m.coef(1, 1), 0.0, 1e-8);
    EXPECT_NEAR(m.coef(0, 0), 0.0, 1e-8);
}

TEST(Gps, ObservationalModelAtOrigin) {
    const std::vector<double> zero(kSimCovariates, 0.0);
    Eigen::VectorXd truth = assignment_probabilities(Assignment::observational, 2, zero);
    const double f1 = std::exp(-0.50), f2 = std::exp(-0.75);
    EXPECT_NEAR(truth[0], 1.0 / (1 + f1 + f2), 1e-15);
    EXPECT_NEAR(truth[0], 0.4810, 5e-5);
    EXPECT_NEAR(truth[1], 0.2918, 5e-5);
    EXPECT_NEAR(truth[2], 0.2272, 5e-5);

    // fitted to generated data, the model recovers the origin probabilities
    ScenarioSpec spec;
    spec.assignment = Assignment::observational;
    spec.n_train = 20000;
    spec.n_test = 10;
    spec.seed = 17;
    SimData sim = generate(spec);
    GpsOptions opts;
    opts.clip_eps = 0.0;
    GpsModel m = fit_gps(sim.train, opts);
    ASSERT_TRUE(m.info.converged);
    Eigen::VectorXd est = predict_gps(m, zero);
    for (int t = 0; t <= 2; ++t) {
        const double se = std::sqrt(truth[t] * (1 - truth[t]) * (kSimCovariates + 1) / spec.n_train);
        EXPECT_NEAR(est[t], truth[t], 3 * se) << "arm " << t;
    }
}

TEST(Gps, ZeroCoefficientsAreUniform) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(3, 3);
    m.clip_eps = 0.0;
    Eigen::VectorXd p = predict_gps(m, std::vector<double>{1.0, -2.0});
    for (int t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(p[t], 0.25);
}

TEST(Gps, HandSoftmax) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(2, 1);
    m.coef(0, 0) = std::log(2.0);
    m.coef(1, 0) = std::log(3.0);
    m.clip_eps = 0.0;
    Eigen::VectorXd p = predict_gps(m, std::vector<double>{});
    EXPECT_NEAR(p[0], 1.0 / 6, 1e-15);
    EXPECT_NEAR(p[1], 2.0 / 6, 1e-15);
    EXPECT_NEAR(p[2], 3.0 / 6, 1e-15);
}

TEST(Gps, ClippingRaisesTinyProbabilities) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(2, 1);
    m.coef(0, 0) = std::log(1e-9);
    m.clip_eps = 0.01;
    Eigen::VectorXd raw = predict_gps_raw(m, std::vector<double>{});
    EXPECT_LT(raw[1], 1e-8);
    Eigen::VectorXd p = predict_gps(m, std::vector<double>{});
    EXPECT_GE(p[1], 0.01);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    for (int t = 0; t < 3; ++t) {
        EXPECT_GE(p[t], 0.01 - 1e-15);
        EXPECT_LE(p[t], 0.99 + 1e-15);
    }
}

TEST(Gps, ClippedVectorsStayValid) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-25.0, 25.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const int k = 2 + trial % 4;
        Eigen::VectorXd eta(k);
        for (int t = 0; t < k; ++t) eta[t] = u(rng);
        Eigen::VectorXd raw = (eta.array() - eta.maxCoeff()).exp();
        raw /= raw.sum();
        const double eps = 0.2 / k;
        Eigen::VectorXd p = clip_probabilities(raw, eps);
        EXPECT_NEAR(p.sum(), 1.0, 1e-12);
        EXPECT_GE(p.minCoeff(), eps - 1e-15);
        EXPECT_LE(p.maxCoeff(), 1 - eps + 1e-15);
    }
}

TEST(Gps, NonFiniteCovariateRejected) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(2, 2);
    EXPECT_THROW(predict_gps(m, std::vector<double>{std::nan("")}), DataError);
}

TEST(Gps, AbsentArmIsUnfittable) {
    Dataset d(Eigen::VectorXd::Zero(4), {0, 1, 0, 1}, Eigen::MatrixXd::Ones(4, 1), {}, 2);
    EXPECT_THROW(fit_gps(d), DataError);
}

TEST(Gps, AnalyticGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 10; ++trial) {
        const int T = 2 + trial % 2, p = 3;
        Dataset d = random_assignment(60, p, T, 100 + trial);
        Eigen::MatrixXd coef(T, p + 1);
        for (int t = 0; t < T; ++t) {
            for (int j = 0; j <= p; ++j) coef(t, j) = 0.5 * nd(rng);
        }
        Eigen::MatrixXd g = gps_gradient(d, coef);
        for (int t = 0; t < T; ++t) {
            for (int j = 0; j <= p; ++j) {
                const double h = 1e-5;
                Eigen::MatrixXd up = coef, dn = coef;
                up(t, j) += h;
                dn(t, j) -= h;
                const double fd = (gps_loglik(d, up) - gps_loglik(d, dn)) / (2 * h);
                EXPECT_LE(std::abs(fd - g(t, j)), 1e-5 * std::max(1.0, std::abs(g(t, j))))
                    << "t=" << t << " j=" << j;
            }
        }
    }
}

TEST(Gps, LogLikelihoodNonDecreasing) {
    ScenarioSpec spec;
    spec.assignment = Assignment::observational;
    spec.T = 3;
    spec.n_train = 2000;
    spec.n_test = 10;
    SimData sim = generate(spec);
    GpsModel m = fit_gps(sim.train);
    ASSERT_TRUE(m.info.converged);
    ASSERT_GE(m.info.loglik_trace.size(), 2u);
    for (std::size_t k = 1; k < m.info.loglik_trace.size(); ++k) {
        EXPECT_GE(m.info.loglik_trace[k], m.info.loglik_trace[k - 1]);
    }
    EXPECT_LE(m.info.grad_norm, 1e-8);
    EXPECT_NEAR(m.info.loglik, gps_loglik(sim.train, m.coef), 1e-10);
}

TEST(Gps, SeparatedDataIsFlagged) {
    const int n = 30;
    Eigen::MatrixXd x(n, 1);
    std::vector<int> w(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = i;
        w[i] = i < 10 ? 0 : (i < 20 ? 1 : 2);
    }
    Dataset d(Eigen::VectorXd::Zero(n), w, x, {}, 2);
    GpsModel m = fit_gps(d);
    EXPECT_FALSE(m.info.converged);
    EXPECT_LE(m.info.iterations, 200);
}

TEST(Gps, ConstantModelMatchesRatio) {
    const std::vector<double> probs{0.5, 0.25, 0.25};
    GpsModel m = GpsModel::constant(probs, 4);
    Eigen::VectorXd p = predict_gps(m, std::vector<double>{1, 2, 3, 4});
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(p[t], probs[t], 1e-15);
}

TEST(Gps, JsonRoundTrip) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Random(2, 4);
    m.clip_eps = 0.02;
    m.info.converged = true;
    m.info.iterations = 7;
    nlohmann::json j = m;
    GpsModel back = j.get<GpsModel>();
    EXPECT_EQ(back.coef, m.coef);
    EXPECT_EQ(back.clip_eps, m.clip_eps);
    EXPECT_EQ(back.info.iterations, 7);
    EXPECT_TRUE(back.info.converged);
}
