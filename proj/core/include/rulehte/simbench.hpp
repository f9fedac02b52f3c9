#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/pipeline.hpp"
#include "rulehte/propensity.hpp"

namespace rulehte {

enum class Assignment { rct, observational };
enum class MainEffect { M1, M2, M3 };
enum class TreatmentEffect { T1, T2, T3 };

inline constexpr int kSimCovariates = 10;

struct ScenarioSpec {
    int T = 2;
    Assignment assignment = Assignment::rct;
    MainEffect main_effect = MainEffect::M1;
    TreatmentEffect treatment_effect = TreatmentEffect::T1;
    int n_train = 1000;
    int n_test = 1000;
    std::uint64_t seed = 1;

    void validate() const;
    /// "A-B" with A, B in {L, S, N}.
    std::string code() const;
    /// e.g. "rct/T2/L-L".
    std::string label() const;
};

/// Sets main and treatment effect from "A-B"; L, S, N stand for linear,
/// stepwise and nonlinear.
void apply_scenario_code(ScenarioSpec& spec, const std::string& code);
Assignment assignment_from_string(const std::string& s);
std::string to_string(Assignment a);

/// mu(x) for a 10-covariate vector.
double main_effect(MainEffect m, std::span<const double> x);
/// delta_t(x), t in 0..4.
double treatment_effect(TreatmentEffect f, std::span<const double> x, int t);
/// True assignment probabilities over arms 0..T.
Eigen::VectorXd assignment_probabilities(Assignment a, int T, std::span<const double> x);
/// The generator's assignment mechanism as an (unclipped) GPS model.
GpsModel true_gps_model(Assignment a, int T);

struct SimData {
    Dataset train;
    Dataset test;
    Eigen::MatrixXd true_hte_train;  ///< n_train x T
    Eigen::MatrixXd true_hte;        ///< n_test x T
    Eigen::MatrixXd true_gps_train;  ///< n_train x (T+1)
    Eigen::MatrixXd true_gps;        ///< n_test x (T+1)
};

SimData generate(const ScenarioSpec& spec);

// Metrics. Matrices are n x K with one column per non-control arm.

double mpehe(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);

struct BiasResult {
    double value = 0.0;
    std::vector<int> excluded;  ///< arms (1-based) whose mean true HTE is 0
};
/// Throws NumericalError when every arm is excluded.
BiasResult abs_rel_bias_detail(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);
double abs_rel_bias(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);

/// Argmax over {0 (value 0), 1..K}; ties go to the lowest arm.
std::vector<int> best_arms(const Eigen::MatrixXd& hte);
/// Unweighted Cohen's kappa between two label vectors with values in 0..classes-1.
double cohens_kappa_labels(const std::vector<int>& a, const std::vector<int>& b, int classes);
double cohens_kappa(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> v);
/// Spearman correlation with average-rank tie correction; NaN when either
/// vector is constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct SpearmanResult {
    double value = 0.0;
    int excluded = 0;  ///< subjects whose correlation is undefined
};
SpearmanResult spearman_avg_detail(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);
double spearman_avg(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);

struct SubgroupRow {
    int bin = 0;  ///< 1-based
    int n = 0;
    int n_arm = 0;
    int n_control = 0;
    double actual = 0.0;     ///< NaN when the bin lacks arm-t or control rows
    double estimated = 0.0;
};
/// Sorts by estimated HTE of arm t, bins into n_groups near-equal groups
/// (earlier bins take the remainder) and compares arm-t vs control means.
std::vector<SubgroupRow> subgroup_eval(const Eigen::VectorXd& est_hte, const Dataset& data, int t,
                                       int n_groups = 5);

/// mean |actual - est| / |Spearman(actual, est)|, +inf when any sign
/// differs or the correlation is 0. NaN pairs are skipped; fewer than two
/// remaining bins raise NumericalError.
double tune_metric(std::span<const double> actual, std::span<const double> est);

struct MetricsReport {
    double mpehe = 0.0;
    double abs_rel_bias = 0.0;
    double kappa = 0.0;
    double spearman = 0.0;
    int n_terms = -1;  ///< -1 when not applicable
    int spearman_excluded = 0;
};

/// All four metrics; Spearman is NaN when K < 2.
MetricsReport evaluate_metrics(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est);

struct MethodSpec {
    std::string name;
    FitConfig config;
};

struct BenchmarkConfig {
    std::vector<ScenarioSpec> scenarios;
    std::vector<MethodSpec> methods;
    int replications = 1;
    std::uint64_t master_seed = 1;
    /// Use the generator's true assignment probabilities instead of estimating them.
    bool known_gps = false;
    int jobs = 1;
};

struct BenchmarkRow {
    std::string scenario;
    std::string method;
    std::string metric;
    double mean = 0.0;
    double sd = 0.0;
    int replications = 0;  ///< successful replications
    int failures = 0;
};

struct BenchmarkFailure {
    std::string scenario;
    std::string method;
    int replication = 0;
    std::string message;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;
    std::vector<BenchmarkFailure> failures;
    nlohmann::json manifest;
};

/// Seed of replication r of scenario s.
std::uint64_t replication_seed(std::uint64_t master, int scenario, int replication);

/// Every replication draws one dataset shared by all methods. Failures are
/// recorded per replication and excluded from the summaries.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

void write_benchmark_csv(std::ostream& out, const BenchmarkReport& report);

}  // namespace rulehte
