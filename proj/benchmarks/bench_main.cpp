#include <benchmark/benchmark.h>

#include <random>

#include "rulehte/basis.hpp"
#include "rulehte/ensemble.hpp"
#include "rulehte/outcome_transform.hpp"
#include "rulehte/rulegen.hpp"
#include "rulehte/simbench.hpp"

using namespace rulehte;

namespace {

SimData sim(int n) {
    ScenarioSpec s;
    s.n_train = n;
    s.n_test = 1;
    return generate(s);
}

GroupedDesign design(int n, int G, std::uint64_t seed, Eigen::VectorXd& y) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd basis(n, G);
    std::vector<int> w(n);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
        w[i] = i % 3;
        for (int g = 0; g < G; ++g) basis(i, g) = g % 2 ? nd(rng) : static_cast<double>(nd(rng) > 0.5);
        y[i] = basis(i, 0) * (w[i] - 1.0) + basis(i, 1) + nd(rng);
    }
    return GroupedDesign(basis, w, 2);
}

}  // namespace

static void BM_GroupLassoFit(benchmark::State& state) {
    Eigen::VectorXd y;
    const GroupedDesign d = design(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), 1, y);
    const double lambda = lambda_max(d, y) * 0.05;
    for (auto _ : state) benchmark::DoNotOptimize(group_lasso_fit(d, y, lambda).objective);
}
BENCHMARK(BM_GroupLassoFit)->Args({1000, 100})->Args({1000, 400})->Unit(benchmark::kMillisecond);

static void BM_GroupLassoPath(benchmark::State& state) {
    Eigen::VectorXd y;
    const GroupedDesign d = design(1000, static_cast<int>(state.range(0)), 2, y);
    const auto path = lambda_path(lambda_max(d, y));
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(d.n_groups());
    for (auto _ : state) benchmark::DoNotOptimize(group_lasso_path(d, y, path, w).size());
}
BENCHMARK(BM_GroupLassoPath)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_Boost(benchmark::State& state) {
    const SimData s = sim(1000);
    const TransformedOutcomes z = transform_outcomes(s.train, true_gps_model(Assignment::rct, 2));
    BoostConfig cfg;
    cfg.n_trees = static_cast<int>(state.range(0));
    cfg.learner = state.range(1) == 0 ? Learner::gbm : Learner::ctree;
    for (auto _ : state) benchmark::DoNotOptimize(boost(z, s.train, cfg).trees.size());
}
BENCHMARK(BM_Boost)->Args({333, 0})->Args({100, 1})->Unit(benchmark::kMillisecond);

static void BM_RuleEvaluation(benchmark::State& state) {
    const SimData s = sim(1000);
    const TransformedOutcomes z = transform_outcomes(s.train, true_gps_model(Assignment::rct, 2));
    BoostConfig cfg;
    cfg.n_trees = 100;
    cfg.mean_size = 3.0;
    const BoostResult b = boost(z, s.train, cfg);
    BasisSet basis;
    for (const auto& t : b.trees) {
        for (auto& r : extract_rules(t)) basis.rules.push_back(std::move(r));
    }
    basis.linears = fit_linear_terms(s.train).terms;
    for (auto _ : state) benchmark::DoNotOptimize(basis.evaluate_rows(s.train.x()).sum());
    state.counters["rules"] = static_cast<double>(basis.n_rules());
}
BENCHMARK(BM_RuleEvaluation)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
