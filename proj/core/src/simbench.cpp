#include "rulehte/simbench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"
#include "rulehte/parallel.hpp"
#include "rulehte/rng.hpp"

namespace rulehte {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Treatment-effect coefficients for arms 0..4.
constexpr double kBeta[5][3] = {{2, 2, 2}, {-1, 2, 4}, {3, 3, -1}, {-3, 3, 1}, {-1, 4, 1}};

// Assignment linear predictors for arms 1..4: intercept, then x1..x5.
constexpr double kAssign[4][6] = {
    {-0.50, -0.1, -0.2, -0.3, 0.2, -0.7},
    {-0.75, -0.2, -0.4, -0.6, 0.4, -0.3},
    {-1.00, -0.2, -0.5, -0.5, 0.5, -0.3},
    {-1.50, -0.3, -0.4, -0.2, 0.4, -0.1},
};

char effect_letter(int k) { return "LSN"[k]; }

int letter_index(char c) {
    switch (c) {
        case 'L': return 0;
        case 'S': return 1;
        case 'N': return 2;
        default: throw ConfigError(std::string("scenario letter must be L, S or N, got '") + c + "'");
    }
}

void check_shapes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("metric inputs differ in shape: " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()));
    }
    if (a.cols() < 1) throw DimensionError("metric inputs need at least one arm column");
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

void ScenarioSpec::validate() const {
    if (T < 2 || T > 4) throw ConfigError("scenario T must be 2, 3 or 4");
    if (n_train < 1 || n_test < 1) throw ConfigError("scenario sample sizes must be >= 1");
}

std::string ScenarioSpec::code() const {
    return std::string{effect_letter(static_cast<int>(main_effect)), '-',
                       effect_letter(static_cast<int>(treatment_effect))};
}

std::string ScenarioSpec::label() const {
    return to_string(assignment) + "/T" + std::to_string(T) + "/" + code();
}

void apply_scenario_code(ScenarioSpec& spec, const std::string& code) {
    if (code.size() != 3 || code[1] != '-') throw ConfigError("scenario code must look like 'L-S', got '" + code + "'");
    spec.main_effect = static_cast<MainEffect>(letter_index(code[0]));
    spec.treatment_effect = static_cast<TreatmentEffect>(letter_index(code[2]));
}

Assignment assignment_from_string(const std::string& s) {
    if (s == "rct") return Assignment::rct;
    if (s == "observational" || s == "obs") return Assignment::observational;
    throw ConfigError("assignment must be rct or observational, got '" + s + "'");
}

std::string to_string(Assignment a) { return a == Assignment::rct ? "rct" : "observational"; }

double main_effect(MainEffect m, std::span<const double> x) {
    if (x.size() < 5) throw DimensionError("main effect needs at least 5 covariates");
    auto I = [](bool b) { return b ? 1.0 : 0.0; };
    switch (m) {
        case MainEffect::M1:
            return 0.6 * x[0] + 0.9 * x[1] + 0.6 * x[2] - 0.9 * x[3] + 0.6 * x[4];
        case MainEffect::M2:
            return 1.2 * I(x[0] > -1) * I(x[2] < 1) - 1.2 * I(x[1] < 0.5) - 1.2 * I(x[2] > -1) * I(x[4] < 1) +
                   1.2 * I(x[3] > 0.5);
        case MainEffect::M3:
            return 0.6 * x[0] * x[0] + 0.5 * x[1] * x[2] - 1.2 * std::cos(std::numbers::pi * x[3] * x[4]);
    }
    return 0.0;
}

double treatment_effect(TreatmentEffect f, std::span<const double> x, int t) {
    if (t < 0 || t > 4) throw DomainError("treatment effect arm must lie in 0..4");
    if (x.size() < 5) throw DimensionError("treatment effect needs at least 5 covariates");
    auto I = [](bool b) { return b ? 1.0 : 0.0; };
    double h1 = 0, h2 = 0, h3 = 0;
    switch (f) {
        case TreatmentEffect::T1:
            h1 = 0.5 * x[0] + x[1];
            h2 = 0.5 * x[2] + x[3];
            h3 = 0.5 * x[4] + x[1];
            break;
        case TreatmentEffect::T2:
            h1 = 1.4 * I(x[0] > 0) - 0.3 * I(x[1] > 0.5);
            h2 = 1.4 * I(x[2] > 0) - 0.3 * I(x[3] > 0.5);
            h3 = 1.4 * I(x[4] > 0) - 0.3 * I(x[1] > 0.5);
            break;
        case TreatmentEffect::T3:
            h1 = 0.75 * std::sin(x[0]) + x[1];
            h2 = 0.75 * std::sin(x[2]) + x[3];
            h3 = 0.75 * std::sin(x[4]) + x[1];
            break;
    }
    return kBeta[t][0] * h1 + kBeta[t][1] * h2 + kBeta[t][2] * h3;
}

Eigen::VectorXd assignment_probabilities(Assignment a, int T, std::span<const double> x) {
    if (T < 1 || T > 4) throw ConfigError("assignment supports 1..4 treatment arms");
    Eigen::VectorXd p(T + 1);
    if (a == Assignment::rct) {
        p.setConstant(1.0 / (T + 1));
        return p;
    }
    if (x.size() < 5) throw DimensionError("assignment model needs at least 5 covariates");
    double total = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double* c = kAssign[t - 1];
        p[t] = std::exp(c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[2] + c[4] * x[3] + c[5] * x[4]);
        total += p[t];
    }
    p[0] = 1.0;
    return p / total;
}

GpsModel true_gps_model(Assignment a, int T) {
    GpsModel m;
    m.coef = Eigen::MatrixXd::Zero(T, kSimCovariates + 1);
    m.clip_eps = 0.0;
    if (a == Assignment::observational) {
        for (int t = 1; t <= T; ++t) {
            for (int k = 0; k < 6; ++k) m.coef(t - 1, k) = kAssign[t - 1][k];
        }
    }
    m.info.converged = true;
    return m;
}

namespace {

struct Draw {
    Dataset data;
    Eigen::MatrixXd hte;
    Eigen::MatrixXd gps;
};

Draw draw(const ScenarioSpec& spec, int n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd x(n, kSimCovariates);
    Eigen::VectorXd y(n);
    std::vector<int> w(n);
    Eigen::MatrixXd hte(n, spec.T);
    Eigen::MatrixXd gps(n, spec.T + 1);
    std::array<double, kSimCovariates> row{};
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < kSimCovariates; ++j) {
            row[j] = j % 2 == 0 ? normal(rng) : (coin(rng) ? 1.0 : 0.0);
            x(i, j) = row[j];
        }
        const Eigen::VectorXd p = assignment_probabilities(spec.assignment, spec.T, row);
        gps.row(i) = p.transpose();
        const double u = unif(rng);
        int arm = spec.T;
        double cum = 0.0;
        for (int t = 0; t <= spec.T; ++t) {
            cum += p[t];
            if (u < cum) {
                arm = t;
                break;
            }
        }
        w[i] = arm;
        const double d0 = treatment_effect(spec.treatment_effect, row, 0);
        for (int t = 1; t <= spec.T; ++t) hte(i, t - 1) = treatment_effect(spec.treatment_effect, row, t) - d0;
        y[i] = main_effect(spec.main_effect, row) + treatment_effect(spec.treatment_effect, row, arm) + normal(rng);
    }
    return {Dataset(std::move(y), std::move(w), std::move(x), {}, spec.T), std::move(hte), std::move(gps)};
}

}  // namespace

SimData generate(const ScenarioSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Draw tr = draw(spec, spec.n_train, rng);
    Draw te = draw(spec, spec.n_test, rng);
    return SimData{std::move(tr.data), std::move(te.data), std::move(tr.hte),
                   std::move(te.hte),  std::move(tr.gps),  std::move(te.gps)};
}

double mpehe(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    check_shapes(truth, est);
    if (truth.rows() < 1) throw DimensionError("mpehe needs at least one row");
    const double mse = (truth - est).squaredNorm() / static_cast<double>(truth.rows() * truth.cols());
    return std::sqrt(mse);
}

BiasResult abs_rel_bias_detail(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    check_shapes(truth, est);
    if (truth.rows() < 1) throw DimensionError("abs_rel_bias needs at least one row");
    BiasResult out;
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index k = 0; k < truth.cols(); ++k) {
        const double mean_true = truth.col(k).mean();
        if (mean_true == 0.0) {
            out.excluded.push_back(static_cast<int>(k) + 1);
            continue;
        }
        sum += std::abs((truth.col(k) - est.col(k)).mean() / mean_true);
        ++used;
    }
    if (used == 0) throw NumericalError("absolute relative bias undefined: every arm has mean true HTE 0");
    out.value = sum / used;
    return out;
}

double abs_rel_bias(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    return abs_rel_bias_detail(truth, est).value;
}

std::vector<int> best_arms(const Eigen::MatrixXd& hte) {
    std::vector<int> out(hte.rows());
    for (Eigen::Index i = 0; i < hte.rows(); ++i) {
        int best = 0;
        double value = 0.0;
        for (Eigen::Index k = 0; k < hte.cols(); ++k) {
            if (hte(i, k) > value) {
                value = hte(i, k);
                best = static_cast<int>(k) + 1;
            }
        }
        out[i] = best;
    }
    return out;
}

double cohens_kappa_labels(const std::vector<int>& a, const std::vector<int>& b, int classes) {
    if (a.size() != b.size()) throw DimensionError("kappa label vectors differ in length");
    if (a.empty()) throw DimensionError("kappa needs at least one subject");
    const double n = static_cast<double>(a.size());
    std::vector<double> ca(classes, 0.0), cb(classes, 0.0);
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0 || a[i] >= classes || b[i] < 0 || b[i] >= classes) {
            throw DimensionError("kappa label outside 0.." + std::to_string(classes - 1));
        }
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double po = agree / n;
    double pe = 0.0;
    for (int k = 0; k < classes; ++k) pe += (ca[k] / n) * (cb[k] / n);
    if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

double cohens_kappa(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    check_shapes(truth, est);
    return cohens_kappa_labels(best_arms(truth), best_arms(est), static_cast<int>(truth.cols()) + 1);
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("spearman inputs differ in length");
    if (a.size() < 2) return kNaN;
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

SpearmanResult spearman_avg_detail(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    check_shapes(truth, est);
    if (truth.cols() < 2) throw DimensionError("spearman_avg needs at least two treatment arms");
    SpearmanResult out;
    double sum = 0.0;
    int used = 0;
    std::vector<double> a(truth.cols()), b(truth.cols());
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index k = 0; k < truth.cols(); ++k) {
            a[k] = truth(i, k);
            b[k] = est(i, k);
        }
        const double r = spearman(a, b);
        if (std::isnan(r)) {
            ++out.excluded;
            continue;
        }
        sum += r;
        ++used;
    }
    out.value = used > 0 ? sum / used : kNaN;
    return out;
}

double spearman_avg(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    return spearman_avg_detail(truth, est).value;
}

std::vector<SubgroupRow> subgroup_eval(const Eigen::VectorXd& est_hte, const Dataset& data, int t, int n_groups) {
    if (n_groups < 2) throw ConfigError("subgroup evaluation needs at least 2 groups");
    if (t < 1 || t > data.T()) throw DomainError("subgroup arm must lie in 1..T");
    if (est_hte.size() != data.n()) throw DimensionError("estimated HTE length differs from data rows");
    const int n = data.n();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return est_hte[a] < est_hte[b]; });
    std::vector<SubgroupRow> out;
    const int base = n / n_groups;
    const int extra = n % n_groups;
    int pos = 0;
    for (int g = 0; g < n_groups; ++g) {
        const int size = base + (g < extra ? 1 : 0);
        SubgroupRow row;
        row.bin = g + 1;
        row.n = size;
        double sum_arm = 0.0, sum_ctl = 0.0, sum_est = 0.0;
        for (int k = pos; k < pos + size; ++k) {
            const int i = order[k];
            sum_est += est_hte[i];
            if (data.w()[i] == t) {
                ++row.n_arm;
                sum_arm += data.y()[i];
            } else if (data.w()[i] == 0) {
                ++row.n_control;
                sum_ctl += data.y()[i];
            }
        }
        pos += size;
        row.estimated = size > 0 ? sum_est / size : kNaN;
        row.actual = (row.n_arm > 0 && row.n_control > 0) ? sum_arm / row.n_arm - sum_ctl / row.n_control : kNaN;
        out.push_back(row);
    }
    return out;
}

double tune_metric(std::span<const double> actual, std::span<const double> est) {
    if (actual.size() != est.size()) throw DimensionError("tune_metric inputs differ in length");
    std::vector<double> a, e;
    for (std::size_t s = 0; s < actual.size(); ++s) {
        if (std::isnan(actual[s]) || std::isnan(est[s])) continue;
        a.push_back(actual[s]);
        e.push_back(est[s]);
    }
    if (a.size() < 2) throw NumericalError("tune_metric needs at least two bins with both values present");
    double err = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) {
        if (sign_of(a[s]) != sign_of(e[s])) return kInf;
        err += std::abs(a[s] - e[s]);
    }
    const double cor = spearman(a, e);
    if (std::isnan(cor) || cor == 0.0) return kInf;
    return err / static_cast<double>(a.size()) / std::abs(cor);
}

MetricsReport evaluate_metrics(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est) {
    MetricsReport r;
    r.mpehe = mpehe(truth, est);
    r.abs_rel_bias = abs_rel_bias(truth, est);
    r.kappa = cohens_kappa(truth, est);
    if (truth.cols() >= 2) {
        auto sp = spearman_avg_detail(truth, est);
        r.spearman = sp.value;
        r.spearman_excluded = sp.excluded;
    } else {
        r.spearman = kNaN;
    }
    return r;
}

std::uint64_t replication_seed(std::uint64_t master, int scenario, int replication) {
    return derive_seed(master, {static_cast<std::uint64_t>(scenario), static_cast<std::uint64_t>(replication)});
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
    if (cfg.replications < 1) throw ConfigError("replications must be >= 1");
    if (cfg.scenarios.empty()) throw ConfigError("benchmark needs at least one scenario");
    if (cfg.methods.empty()) throw ConfigError("benchmark needs at least one method");
    for (const auto& s : cfg.scenarios) s.validate();
    for (const auto& m : cfg.methods) m.config.validate();

    const int S = static_cast<int>(cfg.scenarios.size());
    const int R = cfg.replications;
    const int M = static_cast<int>(cfg.methods.size());
    struct Cell {
        bool ok = false;
        MetricsReport metrics;
        std::string error;
    };
    std::vector<Cell> cells(static_cast<std::size_t>(S) * R * M);

    parallel_for(S * R, cfg.jobs, [&](int task) {
        const int s = task / R;
        const int r = task % R;
        ScenarioSpec spec = cfg.scenarios[s];
        spec.seed = replication_seed(cfg.master_seed, s, r);
        auto cell = [&](int m) -> Cell& { return cells[(static_cast<std::size_t>(s) * R + r) * M + m]; };
        std::optional<SimData> sim;
        try {
            sim = generate(spec);
        } catch (const std::exception& e) {
            for (int m = 0; m < M; ++m) cell(m).error = std::string("generate: ") + e.what();
            return;
        }
        const GpsModel truth_gps = true_gps_model(spec.assignment, spec.T);
        for (int m = 0; m < M; ++m) {
            FitConfig fc = cfg.methods[m].config;
            fc.seed = derive_seed(spec.seed, {1});
            fc.jobs = 1;
            try {
                GpsModel g = truth_gps;
                g.clip_eps = fc.clip_eps;
                FitOutput fit = fit_model(sim->train, fc, cfg.known_gps ? &g : nullptr);
                const Eigen::MatrixXd est = fit.model.predict_hte_rows(sim->test.x());
                cell(m).metrics = evaluate_metrics(sim->true_hte, est);
                cell(m).metrics.n_terms = fit.model.count_terms();
                cell(m).ok = true;
            } catch (const std::exception& e) {
                cell(m).error = e.what();
            }
        }
    });

    BenchmarkReport out;
    const char* metric_names[] = {"mpehe", "abs_rel_bias", "kappa", "spearman", "n_terms"};
    for (int s = 0; s < S; ++s) {
        const std::string label = cfg.scenarios[s].label();
        for (int m = 0; m < M; ++m) {
            std::vector<const MetricsReport*> ok;
            int failures = 0;
            for (int r = 0; r < R; ++r) {
                const Cell& c = cells[(static_cast<std::size_t>(s) * R + r) * M + m];
                if (c.ok) {
                    ok.push_back(&c.metrics);
                } else {
                    ++failures;
                    out.failures.push_back({label, cfg.methods[m].name, r, c.error});
                }
            }
            for (int k = 0; k < 5; ++k) {
                std::vector<double> vals;
                for (const auto* mr : ok) {
                    const double v = k == 0 ? mr->mpehe
                                     : k == 1 ? mr->abs_rel_bias
                                     : k == 2 ? mr->kappa
                                     : k == 3 ? mr->spearman
                                              : static_cast<double>(mr->n_terms);
                    vals.push_back(v);
                }
                BenchmarkRow row{label, cfg.methods[m].name, metric_names[k], kNaN, kNaN,
                                 static_cast<int>(vals.size()), failures};
                if (!vals.empty()) {
                    const double n = static_cast<double>(vals.size());
                    row.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
                    double ss = 0.0;
                    for (double v : vals) ss += (v - row.mean) * (v - row.mean);
                    row.sd = vals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
                }
                out.rows.push_back(row);
            }
        }
    }

    nlohmann::json scenarios = nlohmann::json::array();
    for (int s = 0; s < S; ++s) {
        const auto& sp = cfg.scenarios[s];
        std::vector<std::uint64_t> seeds;
        for (int r = 0; r < R; ++r) seeds.push_back(replication_seed(cfg.master_seed, s, r));
        scenarios.push_back({{"label", sp.label()},
                             {"T", sp.T},
                             {"assignment", to_string(sp.assignment)},
                             {"code", sp.code()},
                             {"n_train", sp.n_train},
                             {"n_test", sp.n_test},
                             {"seeds", seeds}});
    }
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : cfg.methods) methods.push_back({{"name", m.name}, {"config", fit_config_to_json(m.config)}});
    out.manifest = {{"master_seed", cfg.master_seed},
                    {"replications", R},
                    {"known_gps", cfg.known_gps},
                    {"scenarios", scenarios},
                    {"methods", methods},
                    {"failures", static_cast<int>(out.failures.size())}};
    return out;
}

void write_benchmark_csv(std::ostream& out, const BenchmarkReport& report) {
    csv::write_row(out, {"scenario", "method", "metric", "mean", "sd", "replications", "failures"});
    for (const auto& r : report.rows) {
        csv::write_row(out, {r.scenario, r.method, r.metric, csv::format_double(r.mean), csv::format_double(r.sd),
                             std::to_string(r.replications), std::to_string(r.failures)});
    }
}

}  // namespace rulehte
