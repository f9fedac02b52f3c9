// rulehte command-line front end.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rulehte/csv.hpp"
#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/hte_model.hpp"
#include "rulehte/outcome_transform.hpp"
#include "rulehte/parallel.hpp"
#include "rulehte/pipeline.hpp"
#include "rulehte/simbench.hpp"
#include "rulehte/tuning.hpp"

namespace fs = std::filesystem;
using namespace rulehte;

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::ofstream open_out(const std::string& path) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

void write_matrix(const std::string& path, const Eigen::MatrixXd& m, const std::string& prefix) {
    auto out = open_out(path);
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < m.cols(); ++k) header.push_back(prefix + std::to_string(k + 1));
    csv::write_row(out, header);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row;
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(csv::format_double(m(i, k)));
        csv::write_row(out, row);
    }
}

Eigen::MatrixXd read_matrix(const std::string& path, const std::string& prefix) {
    const auto t = csv::read_file(path);
    std::vector<int> cols;
    for (int k = 1;; ++k) {
        int c = t.column(prefix + std::to_string(k));
        if (c < 0) break;
        cols.push_back(c);
    }
    if (cols.empty()) throw DataError("'" + path + "' has no " + prefix + "1.. columns");
    Eigen::MatrixXd m(t.rows.size(), cols.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
            try {
                m(i, k) = std::stod(t.rows[i][cols[k]]);
            } catch (const std::exception&) {
                throw DataError("'" + path + "' row " + std::to_string(i + 1) + " column " + t.header[cols[k]] +
                                ": non-numeric value");
            }
        }
    }
    return m;
}

// Covariate matrix in the model's column order; outcome and arm columns are ignored.
Eigen::MatrixXd read_covariates(const std::string& path, const std::vector<std::string>& names) {
    const auto t = csv::read_file(path);
    std::vector<int> cols;
    for (const auto& n : names) {
        int c = t.column(n);
        if (c < 0) throw DataError("'" + path + "' lacks covariate column '" + n + "'");
        cols.push_back(c);
    }
    Eigen::MatrixXd x(t.rows.size(), names.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const std::string& cell = t.rows[i][cols[j]];
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
                throw DataError("'" + path + "' row " + std::to_string(i + 1) + " column " + names[j] +
                                ": missing or non-numeric value");
            }
            x(i, j) = v;
        }
    }
    return x;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("expected a comma-separated list of numbers, got '" + s + "'");
        }
    }
    return out;
}

// Flags shared by commands that fit models. Values are applied on top of
// the JSON config only when given on the command line.
struct FitFlags {
    std::string config;
    std::string learner, ensemble, known_gps, size_factor;
    int n_trees = 0, cv_folds = 0, min_node_size = 0, path_length = 0;
    double mean_size = 0, shrinkage = 0, q = 0, clip_eps = 0, subsample = 0, alpha = 0, path_ratio = 0, tol = 0;
    std::uint64_t seed = 0;
    bool no_standardize = false;
    std::vector<CLI::Option*> opts;

    void add(CLI::App* app) {
        app->add_option("--config", config, "JSON configuration file")->check(CLI::ExistingFile);
        o(app->add_option("--learner", learner, "gbm or ctree"));
        o(app->add_option("--ensemble", ensemble, "group_lasso or adaptive_group_lasso"));
        o(app->add_option("--n-trees", n_trees, "boosting iterations"));
        o(app->add_option("--mean-size", mean_size, "mean terminal nodes per tree (>= 2)"));
        o(app->add_option("--shrinkage", shrinkage, "boosting learning rate"));
        o(app->add_option("--min-node-size", min_node_size, "minimum rows per tree node"));
        o(app->add_option("--subsample", subsample, "row fraction per tree"));
        o(app->add_option("--ctree-alpha", alpha, "significance level of the ctree learner"));
        o(app->add_option("--q", q, "winsorizing quantile of linear terms"));
        o(app->add_option("--clip-eps", clip_eps, "propensity clipping bound (0 disables)"));
        o(app->add_option("--known-gps", known_gps, "known assignment probabilities p0,p1,..."));
        o(app->add_option("--cv-folds", cv_folds, "cross-validation folds"));
        o(app->add_option("--path-length", path_length, "lambda path length"));
        o(app->add_option("--path-ratio", path_ratio, "smallest lambda as a fraction of lambda_max"));
        o(app->add_option("--solver-tol", tol, "coordinate descent tolerance"));
        o(app->add_option("--group-size-factor", size_factor, "sqrt_T or sqrt_arms"));
        o(app->add_flag("--no-standardize", no_standardize, "solve on unstandardized columns"));
        o(app->add_option("--seed", seed, "random seed"));
    }
    void o(CLI::Option* opt) { opts.push_back(opt); }
    bool given(const std::string& name) const {
        for (auto* opt : opts) {
            if (opt->check_lname(name.substr(2)) && opt->count() > 0) return true;
        }
        return false;
    }

    FitConfig resolve(int jobs) const {
        FitConfig c;
        if (!config.empty()) c = fit_config_from_json(read_json(config));
        if (given("--learner")) c.learner = learner_from_string(learner);
        if (given("--ensemble")) c.ensemble = ensemble_method_from_string(ensemble);
        if (given("--n-trees")) c.n_trees = n_trees;
        if (given("--mean-size")) c.mean_size = mean_size;
        if (given("--shrinkage")) c.shrinkage = shrinkage;
        if (given("--min-node-size")) c.min_node_size = min_node_size;
        if (given("--subsample")) c.subsample_fraction = subsample;
        if (given("--ctree-alpha")) c.ctree_alpha = alpha;
        if (given("--q")) c.q = q;
        if (given("--clip-eps")) c.clip_eps = clip_eps;
        if (given("--known-gps")) c.known_gps = parse_doubles(known_gps);
        if (given("--cv-folds")) c.cv_folds = cv_folds;
        if (given("--path-length")) c.path_length = path_length;
        if (given("--path-ratio")) c.path_ratio = path_ratio;
        if (given("--solver-tol")) c.solver_tol = tol;
        if (given("--group-size-factor")) {
            c = fit_config_from_json(nlohmann::json{{"group_size_factor", size_factor}}, c);
        }
        if (given("--no-standardize")) c.standardize = false;
        if (given("--seed")) c.seed = seed;
        c.jobs = jobs;
        c.validate();
        return c;
    }
};

struct SchemaFlags {
    CsvSchema schema;
    std::string covariates;
    int arms = 0;

    void add(CLI::App* app) {
        app->add_option("--outcome", schema.outcome, "outcome column")->capture_default_str();
        app->add_option("--arm", schema.arm, "arm column (values 0..T)")->capture_default_str();
        app->add_option("--covariates", covariates, "comma-separated covariate columns (default: all others)");
        app->add_option("--arms", arms, "number of non-control arms T (default: largest observed arm)");
    }
    CsvSchema resolve() const {
        CsvSchema s = schema;
        if (!covariates.empty()) {
            std::stringstream ss(covariates);
            std::string item;
            while (std::getline(ss, item, ',')) s.covariates.push_back(item);
        }
        if (arms > 0) s.arms = arms;
        return s;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rule-ensemble estimation of heterogeneous treatment effects in multi-arm studies"};
    app.require_subcommand(1);
    int jobs = 1;
    app.add_option("--jobs", jobs, "worker threads (0 = all cores)")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a simulation scenario");
    ScenarioSpec spec;
    std::string sim_code = "L-L", sim_assign = "rct", sim_dir = ".";
    sim->add_option("--scenario", sim_code, "main-treatment effect code, e.g. L-L or N-S")->capture_default_str();
    sim->add_option("--assignment", sim_assign, "rct or observational")->capture_default_str();
    sim->add_option("--arms", spec.T, "number of non-control arms (2..4)")->capture_default_str();
    sim->add_option("--n-train", spec.n_train)->capture_default_str();
    sim->add_option("--n-test", spec.n_test)->capture_default_str();
    sim->add_option("--seed", spec.seed)->capture_default_str();
    sim->add_option("--out-dir", sim_dir, "output directory")->capture_default_str();

    // fit
    auto* fit = app.add_subcommand("fit", "fit a rule-ensemble HTE model");
    FitFlags fit_flags;
    fit_flags.add(fit);
    SchemaFlags fit_schema;
    fit_schema.add(fit);
    std::string fit_train, fit_model_path = "model.json", fit_report, fit_cv;
    fit->add_option("--train", fit_train, "training CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--model", fit_model_path, "output model JSON")->capture_default_str();
    fit->add_option("--report", fit_report, "output fit report JSON");
    fit->add_option("--cv-curve", fit_cv, "output cross-validation curve CSV");

    // predict
    auto* pred = app.add_subcommand("predict", "predict outcomes or treatment effects");
    std::string pred_model, pred_data, pred_out = "predictions.csv";
    int pred_hte = 0, pred_outcome = -1;
    std::vector<int> pred_pair;
    pred->add_option("--model", pred_model)->required()->check(CLI::ExistingFile);
    pred->add_option("--data", pred_data, "CSV with the model's covariate columns")->required()->check(CLI::ExistingFile);
    pred->add_option("--out", pred_out)->capture_default_str();
    auto* o_hte = pred->add_option("--hte", pred_hte, "HTE of arm t vs control");
    auto* o_pair = pred->add_option("--pairwise", pred_pair, "HTE difference between arms t1 and t2")->expected(2);
    auto* o_out = pred->add_option("--outcome", pred_outcome, "predicted outcome under arm t");
    o_hte->excludes(o_pair)->excludes(o_out);
    o_pair->excludes(o_out);

    // importance
    auto* imp = app.add_subcommand("importance", "export term and variable importance");
    std::string imp_model, imp_out = "importance.csv", imp_vars;
    int imp_t1 = 1, imp_t2 = 0;
    imp->add_option("--model", imp_model)->required()->check(CLI::ExistingFile);
    imp->add_option("--t1", imp_t1)->capture_default_str();
    imp->add_option("--t2", imp_t2, "comparison arm (0 = control)")->capture_default_str();
    imp->add_option("--out", imp_out, "term importance CSV")->capture_default_str();
    imp->add_option("--variables", imp_vars, "variable importance CSV");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compare estimated with true HTEs");
    std::string ev_truth, ev_est, ev_out;
    ev->add_option("--truth", ev_truth, "CSV with hte1..hteT columns")->required()->check(CLI::ExistingFile);
    ev->add_option("--estimate", ev_est, "CSV with hte1..hteT columns")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "metrics JSON (default: stdout)");

    // tune
    auto* tn = app.add_subcommand("tune", "grid search with the subgroup tuning metric");
    FitFlags tune_flags;
    tune_flags.add(tn);
    SchemaFlags tune_schema;
    tune_schema.add(tn);
    std::string tn_train, tn_grid, tn_best = "best-config.json", tn_table = "grid.csv";
    TuneConfig tcfg;
    tn->add_option("--train", tn_train)->required()->check(CLI::ExistingFile);
    tn->add_option("--grid", tn_grid, "JSON list of {n_trees, mean_size, shrinkage}")->check(CLI::ExistingFile);
    tn->add_option("--holdout", tcfg.holdout_fraction)->capture_default_str();
    tn->add_option("--tune-arms", tcfg.arms, "arms to score (default: all)");
    tn->add_option("--groups", tcfg.n_groups, "subgroups per arm")->capture_default_str();
    tn->add_option("--best", tn_best, "output best configuration JSON")->capture_default_str();
    tn->add_option("--table", tn_table, "output grid table CSV")->capture_default_str();

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "run the simulation benchmark");
    std::string bm_config, bm_out = "benchmark.csv", bm_manifest = "manifest.json";
    std::vector<std::string> bm_codes{"L-L"}, bm_methods{"gbm.gl", "gbm.agl"};
    std::string bm_assign = "rct";
    BenchmarkConfig bcfg;
    ScenarioSpec bm_base;
    bm->add_option("--config", bm_config, "JSON with scenario and method lists")->check(CLI::ExistingFile);
    bm->add_option("--scenarios", bm_codes, "scenario codes")->delimiter(',');
    bm->add_option("--assignment", bm_assign)->capture_default_str();
    bm->add_option("--arms", bm_base.T)->capture_default_str();
    bm->add_option("--n-train", bm_base.n_train)->capture_default_str();
    bm->add_option("--n-test", bm_base.n_test)->capture_default_str();
    bm->add_option("--methods", bm_methods, "learner.ensemble names, ensemble in {gl, agl}")->delimiter(',');
    bm->add_option("--replications", bcfg.replications)->capture_default_str();
    bm->add_option("--master-seed", bcfg.master_seed)->capture_default_str();
    bm->add_flag("--known-gps", bcfg.known_gps, "use the generator's assignment probabilities");
    bm->add_option("--out", bm_out)->capture_default_str();
    bm->add_option("--manifest", bm_manifest)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
    }
    if (jobs <= 0) jobs = default_jobs();

    try {
        if (*sim) {
            apply_scenario_code(spec, sim_code);
            spec.assignment = assignment_from_string(sim_assign);
            const SimData d = generate(spec);
            fs::create_directories(sim_dir);
            save_dataset((fs::path(sim_dir) / "train.csv").string(), d.train);
            save_dataset((fs::path(sim_dir) / "test.csv").string(), d.test);
            write_matrix((fs::path(sim_dir) / "true_hte.csv").string(), d.true_hte, "hte");
            write_matrix((fs::path(sim_dir) / "true_hte_train.csv").string(), d.true_hte_train, "hte");
            write_matrix((fs::path(sim_dir) / "true_gps_train.csv").string(), d.true_gps_train, "e");
        } else if (*fit) {
            const FitConfig cfg = fit_flags.resolve(jobs);
            const Dataset data = load_dataset(fit_train, fit_schema.resolve());
            const FitOutput res = fit_model(data, cfg);
            save_model(fit_model_path, res.model);
            if (!fit_report.empty()) {
                nlohmann::json rep = res.report.to_json();
                rep["config"] = fit_config_to_json(cfg);
                rep["train"] = fs::path(fit_train).filename().string();
                write_json(fit_report, rep);
            }
            if (!fit_cv.empty()) {
                auto out = open_out(fit_cv);
                write_cv_curve(out, res.report.cv);
            }
            for (const auto& w : res.report.warnings) std::cerr << "warning: " << w << '\n';
            std::cerr << "rules " << res.report.n_rules_generated << " -> " << res.report.n_rules_deduped
                      << " after dedup; active terms " << res.report.n_active << "; lambda " << res.report.lambda
                      << '\n';
        } else if (*pred) {
            const FittedModel m = load_model(pred_model);
            const Eigen::MatrixXd x = read_covariates(pred_data, m.names);
            auto out = open_out(pred_out);
            if (o_pair->count() > 0) {
                for (int t : pred_pair) {
                    if (t < 0 || t > m.T()) throw ConfigError("--pairwise arms must lie in 0.." + std::to_string(m.T()));
                }
                if (pred_pair[0] == pred_pair[1]) throw ConfigError("--pairwise needs two different arms");
                const Eigen::VectorXd v = m.pairwise_rows(x, pred_pair[0], pred_pair[1]);
                csv::write_row(out, {"hte" + std::to_string(pred_pair[0]) + "_vs_" + std::to_string(pred_pair[1])});
                for (Eigen::Index i = 0; i < v.size(); ++i) csv::write_row(out, {csv::format_double(v[i])});
            } else if (o_out->count() > 0) {
                if (pred_outcome < 0 || pred_outcome > m.T()) throw ConfigError("--outcome arm outside 0..T");
                const Eigen::MatrixXd mu = m.predict_outcomes(x);
                csv::write_row(out, {"mu" + std::to_string(pred_outcome)});
                for (Eigen::Index i = 0; i < mu.rows(); ++i) {
                    csv::write_row(out, {csv::format_double(mu(i, pred_outcome))});
                }
            } else if (o_hte->count() > 0) {
                if (pred_hte < 1 || pred_hte > m.T()) throw ConfigError("--hte arm must lie in 1..T");
                const Eigen::MatrixXd h = m.predict_hte_rows(x);
                csv::write_row(out, {"hte" + std::to_string(pred_hte)});
                for (Eigen::Index i = 0; i < h.rows(); ++i) csv::write_row(out, {csv::format_double(h(i, pred_hte - 1))});
            } else {
                out.close();
                write_matrix(pred_out, m.predict_hte_rows(x), "hte");
            }
        } else if (*imp) {
            const FittedModel m = load_model(imp_model);
            {
                auto out = open_out(imp_out);
                write_importance(out, m, imp_t1, imp_t2);
            }
            if (!imp_vars.empty()) {
                auto out = open_out(imp_vars);
                write_variable_importance(out, m, imp_t1, imp_t2);
            }
        } else if (*ev) {
            const Eigen::MatrixXd truth = read_matrix(ev_truth, "hte");
            const Eigen::MatrixXd est = read_matrix(ev_est, "hte");
            const MetricsReport r = evaluate_metrics(truth, est);
            nlohmann::json j{{"mpehe", r.mpehe},
                             {"abs_rel_bias", r.abs_rel_bias},
                             {"kappa", r.kappa},
                             {"spearman", std::isfinite(r.spearman) ? nlohmann::json(r.spearman) : nlohmann::json()},
                             {"spearman_excluded", r.spearman_excluded}};
            if (ev_out.empty()) std::cout << j.dump(2) << '\n';
            else write_json(ev_out, j);
        } else if (*tn) {
            tcfg.base = tune_flags.resolve(jobs);
            tcfg.seed = tcfg.base.seed;
            tcfg.jobs = jobs;
            if (!tn_grid.empty()) {
                tcfg.grid.clear();
                for (const auto& g : read_json(tn_grid)) {
                    tcfg.grid.push_back({g.at("n_trees").get<int>(), g.at("mean_size").get<double>(),
                                         g.at("shrinkage").get<double>()});
                }
            }
            const Dataset data = load_dataset(tn_train, tune_schema.resolve());
            const TuneResult r = tune(data, tcfg);
            {
                auto out = open_out(tn_table);
                write_tune_table(out, r);
            }
            if (!r.best) {
                std::cerr << "error: every grid point has an infinite or undefined tuning metric\n";
                return static_cast<int>(ExitCode::numerical);
            }
            FitConfig best = tcfg.base;
            best.n_trees = r.rows[*r.best].point.n_trees;
            best.mean_size = r.rows[*r.best].point.mean_size;
            best.shrinkage = r.rows[*r.best].point.shrinkage;
            nlohmann::json j = fit_config_to_json(best);
            j["tune_metric"] = r.rows[*r.best].total;
            write_json(tn_best, j);
        } else if (*bm) {
            if (!bm_config.empty()) {
                const auto j = read_json(bm_config);
                if (j.contains("scenarios")) bm_codes = j.at("scenarios").get<std::vector<std::string>>();
                if (j.contains("methods")) bm_methods = j.at("methods").get<std::vector<std::string>>();
                if (j.contains("assignment")) bm_assign = j.at("assignment").get<std::string>();
                if (j.contains("arms")) bm_base.T = j.at("arms").get<int>();
                if (j.contains("n_train")) bm_base.n_train = j.at("n_train").get<int>();
                if (j.contains("n_test")) bm_base.n_test = j.at("n_test").get<int>();
                if (j.contains("replications")) bcfg.replications = j.at("replications").get<int>();
                if (j.contains("master_seed")) bcfg.master_seed = j.at("master_seed").get<std::uint64_t>();
                if (j.contains("known_gps")) bcfg.known_gps = j.at("known_gps").get<bool>();
            }
            bm_base.assignment = assignment_from_string(bm_assign);
            for (const auto& code : bm_codes) {
                ScenarioSpec s = bm_base;
                apply_scenario_code(s, code);
                bcfg.scenarios.push_back(s);
            }
            FitConfig base;
            if (!bm_config.empty()) {
                const auto j = read_json(bm_config);
                if (j.contains("fit")) base = fit_config_from_json(j.at("fit"));
            }
            for (const auto& name : bm_methods) {
                auto dot = name.find('.');
                if (dot == std::string::npos) throw ConfigError("method name must look like gbm.gl, got '" + name + "'");
                MethodSpec m{name, base};
                m.config.learner = learner_from_string(name.substr(0, dot));
                m.config.ensemble = ensemble_method_from_string(name.substr(dot + 1));
                bcfg.methods.push_back(m);
            }
            bcfg.jobs = jobs;
            const BenchmarkReport r = run_benchmark(bcfg);
            {
                auto out = open_out(bm_out);
                write_benchmark_csv(out, r);
            }
            write_json(bm_manifest, r.manifest);
            for (const auto& f : r.failures) {
                std::cerr << "failure: " << f.scenario << " " << f.method << " rep " << f.replication << ": "
                          << f.message << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(exit_code_for(e));
    }
    return 0;
}
