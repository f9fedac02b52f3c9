#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rulehte/error.hpp"
#include "rulehte/pipeline.hpp"
#include "rulehte/simbench.hpp"

using namespace rulehte;

namespace {

FitConfig quick() {
    FitConfig c;
    c.n_trees = 60;
    c.shrinkage = 0.05;
    c.path_length = 30;
    c.cv_folds = 5;
    return c;
}

}  // namespace

TEST(Pipeline, ThreeArmSmokeFit) {
    ScenarioSpec s;
    s.n_train = 400;
    s.n_test = 100;
    s.seed = 3;
    SimData sim = generate(s);
    FitOutput out = fit_model(sim.train, quick());
    EXPECT_GE(out.report.n_active, 1);
    EXPECT_EQ(out.report.n_active, out.model.count_terms());
    EXPECT_EQ(out.model.T(), 2);
    EXPECT_EQ(out.model.p(), kSimCovariates);
    EXPECT_GE(out.report.n_rules_generated, out.report.n_rules_deduped);
    const Eigen::MatrixXd hte = out.model.predict_hte_rows(sim.test.x());
    EXPECT_TRUE(hte.allFinite());
    EXPECT_LT(mpehe(sim.true_hte, hte), mpehe(sim.true_hte, Eigen::MatrixXd::Zero(100, 2)));
}

TEST(Pipeline, DeterministicUnderSeed) {
    ScenarioSpec s;
    s.n_train = 200;
    s.n_test = 1;
    SimData sim = generate(s);
    FitOutput a = fit_model(sim.train, quick());
    FitOutput b = fit_model(sim.train, quick());
    EXPECT_EQ(model_to_json(a.model).dump(), model_to_json(b.model).dump());
}

TEST(Pipeline, AdaptiveOnPureNoiseSelectsNothing) {
    int empty = 0;
    const int reps = 10;
    for (int r = 0; r < reps; ++r) {
        std::mt19937_64 rng(300 + r);
        std::normal_distribution<double> nd;
        const int n = 500;
        Eigen::MatrixXd x(n, 5);
        Eigen::VectorXd y(n);
        std::vector<int> w(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 5; ++j) x(i, j) = nd(rng);
            w[i] = i % 3;
            y[i] = nd(rng);
        }
        FitConfig c = quick();
        c.ensemble = EnsembleMethod::adaptive_group_lasso;
        c.known_gps = std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3};
        c.seed = r;
        FitOutput out = fit_model(Dataset(y, w, x, {}, 2), c);
        if (out.report.n_active == 0) ++empty;
    }
    EXPECT_GE(empty, 8) << empty << " of " << reps;
}

TEST(Pipeline, ErrorsNameTheStage) {
    Dataset d(Eigen::VectorXd::Zero(6), {0, 1, 0, 1, 0, 1}, Eigen::MatrixXd::Ones(6, 1), {}, 2);
    try {
        fit_model(d, quick());
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("propensity: ", 0), 0u) << e.what();
    }
    FitConfig bad = quick();
    bad.cv_folds = 1;
    try {
        fit_model(d, bad);
        FAIL() << "expected an error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("config: ", 0), 0u) << e.what();
    }
}

TEST(Pipeline, ConfigJsonRoundTrip) {
    FitConfig c;
    c.learner = Learner::ctree;
    c.ensemble = EnsembleMethod::adaptive_group_lasso;
    c.n_trees = 17;
    c.known_gps = std::vector<double>{0.5, 0.5};
    c.seed = 12345678901234ULL;
    const nlohmann::json j = fit_config_to_json(c);
    const FitConfig back = fit_config_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(fit_config_to_json(back), j);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_THROW(fit_config_from_json({{"n_tree", 3}}), ConfigError);
    EXPECT_THROW(fit_config_from_json({{"n_trees", "many"}}), ConfigError);
    const FitConfig partial = fit_config_from_json({{"shrinkage", 0.1}});
    EXPECT_EQ(partial.shrinkage, 0.1);
    EXPECT_EQ(partial.n_trees, 333);
}

TEST(Pipeline, KnownGpsMatchesSuppliedModel) {
    ScenarioSpec s;
    s.n_train = 200;
    s.n_test = 1;
    SimData sim = generate(s);
    FitConfig c = quick();
    c.known_gps = std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const GpsModel g = GpsModel::constant(*c.known_gps, kSimCovariates);
    FitConfig c2 = quick();
    FitOutput a = fit_model(sim.train, c);
    FitOutput b = fit_model(sim.train, c2, &g);
    EXPECT_EQ(a.model.coef, b.model.coef);
}
