#include "rulehte/pipeline.hpp"

#include <cmath>
#include <ostream>

#include "rulehte/basis.hpp"
#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"
#include "rulehte/outcome_transform.hpp"
#include "rulehte/rng.hpp"

namespace rulehte {

void FitConfig::validate() const {
    boost_config().validate();
    if (!(q >= 0.0 && q < 0.5)) throw ConfigError("q must lie in [0, 0.5)");
    if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
    if (path_length < 1) throw ConfigError("path_length must be >= 1");
    if (!(path_ratio > 0.0 && path_ratio <= 1.0)) throw ConfigError("path_ratio must lie in (0, 1]");
    if (!(solver_tol > 0.0)) throw ConfigError("solver_tol must be > 0");
    if (max_sweeps < 1) throw ConfigError("max_sweeps must be >= 1");
    if (!(gps_tol > 0.0)) throw ConfigError("gps_tol must be > 0");
    if (gps_max_iter < 1) throw ConfigError("gps_max_iter must be >= 1");
    if (!(clip_eps >= 0.0 && clip_eps < 0.5)) throw ConfigError("clip_eps must lie in [0, 0.5)");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
}

BoostConfig FitConfig::boost_config() const {
    BoostConfig b;
    b.n_trees = n_trees;
    b.mean_size = mean_size;
    b.shrinkage = shrinkage;
    b.learner = learner;
    b.min_node_size = min_node_size;
    b.subsample_fraction = subsample_fraction;
    b.alpha = ctree_alpha;
    b.seed = derive_seed(seed, {1});
    return b;
}

EnsembleConfig FitConfig::ensemble_config() const {
    EnsembleConfig e;
    e.method = ensemble;
    e.path_length = path_length;
    e.path_ratio = path_ratio;
    e.solver.tol = solver_tol;
    e.solver.max_sweeps = max_sweeps;
    e.solver.size_factor = size_factor;
    e.cv.folds = cv_folds;
    e.cv.seed = derive_seed(seed, {2});
    e.cv.jobs = jobs;
    return e;
}

FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig c) {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "learner") c.learner = learner_from_string(v.get<std::string>());
            else if (key == "ensemble") c.ensemble = ensemble_method_from_string(v.get<std::string>());
            else if (key == "n_trees") c.n_trees = v.get<int>();
            else if (key == "mean_size") c.mean_size = v.get<double>();
            else if (key == "shrinkage") c.shrinkage = v.get<double>();
            else if (key == "min_node_size") c.min_node_size = v.get<int>();
            else if (key == "subsample_fraction") c.subsample_fraction = v.get<double>();
            else if (key == "ctree_alpha") c.ctree_alpha = v.get<double>();
            else if (key == "q") c.q = v.get<double>();
            else if (key == "clip_eps") c.clip_eps = v.get<double>();
            else if (key == "gps_tol") c.gps_tol = v.get<double>();
            else if (key == "gps_max_iter") c.gps_max_iter = v.get<int>();
            else if (key == "known_gps") {
                if (v.is_null()) c.known_gps.reset();
                else c.known_gps = v.get<std::vector<double>>();
            }
            else if (key == "cv_folds") c.cv_folds = v.get<int>();
            else if (key == "path_length") c.path_length = v.get<int>();
            else if (key == "path_ratio") c.path_ratio = v.get<double>();
            else if (key == "solver_tol") c.solver_tol = v.get<double>();
            else if (key == "max_sweeps") c.max_sweeps = v.get<int>();
            else if (key == "group_size_factor") {
                auto s = v.get<std::string>();
                if (s == "sqrt_T") c.size_factor = GroupSizeFactor::sqrt_T;
                else if (s == "sqrt_arms") c.size_factor = GroupSizeFactor::sqrt_arms;
                else throw ConfigError("group_size_factor must be sqrt_T or sqrt_arms");
            }
            else if (key == "standardize") c.standardize = v.get<bool>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "jobs") c.jobs = v.get<int>();
            else throw ConfigError("unknown configuration key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("configuration value has the wrong type: ") + e.what());
    }
    return c;
}

nlohmann::json fit_config_to_json(const FitConfig& c) {
    nlohmann::json j{
        {"learner", to_string(c.learner)},
        {"ensemble", to_string(c.ensemble)},
        {"n_trees", c.n_trees},
        {"mean_size", c.mean_size},
        {"shrinkage", c.shrinkage},
        {"min_node_size", c.min_node_size},
        {"subsample_fraction", c.subsample_fraction},
        {"ctree_alpha", c.ctree_alpha},
        {"q", c.q},
        {"clip_eps", c.clip_eps},
        {"gps_tol", c.gps_tol},
        {"gps_max_iter", c.gps_max_iter},
        {"known_gps", c.known_gps ? nlohmann::json(*c.known_gps) : nlohmann::json(nullptr)},
        {"cv_folds", c.cv_folds},
        {"path_length", c.path_length},
        {"path_ratio", c.path_ratio},
        {"solver_tol", c.solver_tol},
        {"max_sweeps", c.max_sweeps},
        {"group_size_factor", c.size_factor == GroupSizeFactor::sqrt_T ? "sqrt_T" : "sqrt_arms"},
        {"standardize", c.standardize},
        {"seed", c.seed},
    };
    return j;
}

nlohmann::json FitReport::to_json() const {
    nlohmann::json j{{"n_rules_generated", n_rules_generated},
                     {"n_rules_deduped", n_rules_deduped},
                     {"n_linear", n_linear},
                     {"dropped_linear", dropped_linear},
                     {"n_active", n_active},
                     {"lambda", lambda},
                     {"intercept_only", intercept_only},
                     {"converged", converged},
                     {"kkt_residual", kkt_residual},
                     {"gps", {{"converged", gps.converged}, {"iterations", gps.iterations}, {"loglik", gps.loglik}}},
                     {"cv", cv_to_json(cv)},
                     {"warnings", warnings}};
    if (stage1_cv) j["stage1_cv"] = cv_to_json(*stage1_cv);
    return j;
}

namespace {

template <class F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
    const std::string prefix = std::string(stage) + ": ";
    try {
        return fn();
    } catch (const DomainError& e) {
        throw DomainError(prefix + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(prefix + e.what());
    } catch (const Error& e) {
        throw Error(prefix + e.what());
    }
}

}  // namespace

FitOutput fit_model(const Dataset& data, const FitConfig& cfg, const GpsModel* gps_in) {
    in_stage("config", [&] { cfg.validate(); });
    FitOutput out;
    FitReport& rep = out.report;

    GpsModel gps = in_stage("propensity", [&] {
        if (gps_in != nullptr) {
            if (gps_in->T() != data.T() || gps_in->p() != data.p()) {
                throw DimensionError("supplied GPS model does not match the data's arms or covariates");
            }
            return *gps_in;
        }
        if (cfg.known_gps) {
            if (static_cast<int>(cfg.known_gps->size()) != data.T() + 1) {
                throw ConfigError("known_gps needs one probability per arm 0.." + std::to_string(data.T()));
            }
            return GpsModel::constant(*cfg.known_gps, data.p(), cfg.clip_eps);
        }
        GpsOptions opts;
        opts.tol = cfg.gps_tol;
        opts.max_iter = cfg.gps_max_iter;
        opts.clip_eps = cfg.clip_eps;
        return fit_gps(data, opts);
    });
    rep.gps = gps.info;
    if (gps_in == nullptr && !cfg.known_gps && !gps.info.converged) {
        rep.warnings.push_back("GPS fit did not converge; gradient max-norm " + std::to_string(gps.info.grad_norm));
    }

    const TransformedOutcomes z = in_stage("transform", [&] { return transform_outcomes(data, gps); });

    std::vector<RuleTerm> rules = in_stage("rulegen", [&] {
        const BoostResult boosted = boost(z, data, cfg.boost_config());
        std::vector<RuleTerm> all;
        for (const auto& tree : boosted.trees) {
            auto r = extract_rules(tree);
            all.insert(all.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        }
        rep.n_rules_generated = static_cast<int>(all.size());
        return dedupe_rules(all, data);
    });
    rep.n_rules_deduped = static_cast<int>(rules.size());

    const LinearTermFit linears = in_stage("basis", [&] { return fit_linear_terms(data, cfg.q); });
    rep.n_linear = static_cast<int>(linears.terms.size());
    rep.dropped_linear = linears.dropped;
    for (int j : linears.dropped) {
        rep.warnings.push_back("linear term for " + data.names()[j] + " dropped: zero SD after winsorizing");
    }

    FittedModel& m = out.model;
    m.basis.rules = std::move(rules);
    m.basis.linears = linears.terms;
    m.names = data.names();

    const GroupedDesign design =
        in_stage("basis", [&] { return build_grouped_design(data, m.basis, cfg.standardize); });
    if (design.n_groups() == 0) throw ConfigError("basis: no rules or linear terms to fit");

    EnsembleResult ens = in_stage("ensemble", [&] { return fit_ensemble(design, data.y(), cfg.ensemble_config()); });

    m.intercepts = ens.fit.intercepts;
    m.coef = ens.fit.coef;
    m.supports.resize(m.basis.n_rules());
    for (int c = 0; c < m.basis.n_rules(); ++c) m.supports[c] = design.basis().col(c).mean();
    m.linear_sds.resize(static_cast<Eigen::Index>(m.basis.linears.size()));
    for (std::size_t j = 0; j < m.basis.linears.size(); ++j) {
        const auto col = design.basis().col(m.basis.n_rules() + static_cast<int>(j));
        const double mean = col.mean();
        const double ss = (col.array() - mean).square().sum();
        m.linear_sds[j] = data.n() > 1 ? std::sqrt(ss / (data.n() - 1)) : 0.0;
    }
    m.meta.learner = to_string(cfg.learner);
    m.meta.ensemble = to_string(cfg.ensemble);
    m.meta.lambda = ens.fit.lambda;
    m.meta.seed = cfg.seed;

    rep.n_active = static_cast<int>(ens.fit.active_groups.size());
    rep.lambda = ens.fit.lambda;
    rep.cv = ens.cv;
    rep.stage1_cv = ens.stage1_cv;
    rep.intercept_only = ens.intercept_only;
    rep.converged = ens.fit.converged;
    rep.kkt_residual = ens.fit.kkt_residual;
    if (!ens.fit.converged) rep.warnings.push_back("group lasso did not converge within max_sweeps");
    rep.warnings.insert(rep.warnings.end(), ens.cv.warnings.begin(), ens.cv.warnings.end());
    return out;
}

void write_cv_curve(std::ostream& out, const CvResult& cv) {
    csv::write_row(out, {"lambda", "mean_error", "se_error", "selected"});
    for (std::size_t k = 0; k < cv.lambdas.size(); ++k) {
        csv::write_row(out, {csv::format_double(cv.lambdas[k]), csv::format_double(cv.mean_error[k]),
                             csv::format_double(cv.se_error[k]),
                             static_cast<int>(k) == cv.best_index ? "1" : "0"});
    }
}

}  // namespace rulehte
