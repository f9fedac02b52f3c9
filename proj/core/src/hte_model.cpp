#include "rulehte/hte_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

namespace {

void check_arm(const FittedModel& m, int t) {
    if (t < 0 || t > m.T()) {
        throw DomainError("arm " + std::to_string(t) + " outside 0.." + std::to_string(m.T()));
    }
}

void check_pair(const FittedModel& m, int t1, int t2) {
    check_arm(m, t1);
    check_arm(m, t2);
    if (t1 == t2) throw DomainError("arms to compare must differ (got " + std::to_string(t1) + " twice)");
}

nlohmann::json bound(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double read_bound(const nlohmann::json& j, double if_null) {
    return j.is_null() ? if_null : j.get<double>();
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void FittedModel::validate() const {
    if (intercepts.size() < 2) throw DimensionError("model needs at least two arms");
    if (coef.rows() != basis.n_groups() || coef.cols() != intercepts.size()) {
        throw DimensionError("model coefficient matrix does not match basis and arms");
    }
    if (supports.size() != basis.n_rules()) throw DimensionError("model supports do not match rule count");
    if (linear_sds.size() != static_cast<Eigen::Index>(basis.linears.size())) {
        throw DimensionError("model linear SDs do not match linear term count");
    }
    for (const auto& r : basis.rules) {
        for (const auto& c : r.conditions()) {
            if (c.var >= p()) throw DimensionError("rule references a covariate beyond the model's covariates");
        }
    }
    for (const auto& l : basis.linears) {
        if (l.var < 0 || l.var >= p()) throw DimensionError("linear term references an unknown covariate");
    }
}

double FittedModel::predict_outcome(std::span<const double> x, int t) const {
    check_arm(*this, t);
    return intercepts[t] + basis.evaluate(x).dot(coef.col(t));
}

double FittedModel::predict_hte(std::span<const double> x, int t) const {
    check_arm(*this, t);
    if (t == 0) throw DomainError("the HTE of the control arm is identically 0");
    return pairwise_hte(x, t, 0);
}

double FittedModel::pairwise_hte(std::span<const double> x, int t1, int t2) const {
    check_pair(*this, t1, t2);
    const Eigen::VectorXd b = basis.evaluate(x);
    return (intercepts[t1] - intercepts[t2]) + b.dot(coef.col(t1) - coef.col(t2));
}

Eigen::MatrixXd FittedModel::predict_outcomes(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = basis.evaluate_rows(x) * coef;
    out.rowwise() += intercepts.transpose();
    return out;
}

Eigen::MatrixXd FittedModel::predict_hte_rows(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd b = basis.evaluate_rows(x);
    Eigen::MatrixXd out(x.rows(), T());
    for (int t = 1; t <= T(); ++t) {
        Eigen::VectorXd gamma = coef.col(t) - coef.col(0);
        out.col(t - 1) = (b * gamma).array() + (intercepts[t] - intercepts[0]);
    }
    return out;
}

Eigen::VectorXd FittedModel::pairwise_rows(const Eigen::MatrixXd& x, int t1, int t2) const {
    check_pair(*this, t1, t2);
    Eigen::VectorXd gamma = coef.col(t1) - coef.col(t2);
    return (basis.evaluate_rows(x) * gamma).array() + (intercepts[t1] - intercepts[t2]);
}

Eigen::VectorXd FittedModel::base_importance(int t1, int t2) const {
    check_pair(*this, t1, t2);
    Eigen::VectorXd out(basis.n_groups());
    const int C = basis.n_rules();
    for (int c = 0; c < C; ++c) {
        const double s = supports[c];
        out[c] = std::abs(coef(c, t1) - coef(c, t2)) * std::sqrt(std::max(0.0, s * (1.0 - s)));
    }
    for (int j = 0; j < static_cast<int>(basis.linears.size()); ++j) {
        out[C + j] = std::abs(coef(C + j, t1) - coef(C + j, t2)) * linear_sds[j];
    }
    return out;
}

Eigen::VectorXd FittedModel::variable_importance(int t1, int t2) const {
    const Eigen::VectorXd base = base_importance(t1, t2);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p());
    const int C = basis.n_rules();
    for (int c = 0; c < C; ++c) {
        const auto& conds = basis.rules[c].conditions();
        if (conds.empty()) continue;
        const double share = base[c] / static_cast<double>(conds.size());
        for (const auto& cond : conds) out[cond.var] += share;
    }
    for (int j = 0; j < static_cast<int>(basis.linears.size()); ++j) out[basis.linears[j].var] += base[C + j];
    return out;
}

int FittedModel::count_terms() const {
    int k = 0;
    for (Eigen::Index g = 0; g < coef.rows(); ++g) {
        if ((coef.row(g).array() != 0.0).any()) ++k;
    }
    return k;
}

nlohmann::json model_to_json(const FittedModel& m) {
    m.validate();
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : m.basis.rules) {
        nlohmann::json conds = nlohmann::json::array();
        for (const auto& c : r.conditions()) {
            conds.push_back({{"var", c.var}, {"lower", bound(c.lower)}, {"upper", bound(c.upper)}});
        }
        rules.push_back({{"conditions", conds}, {"definition", r.describe(m.names)}});
    }
    nlohmann::json linears = nlohmann::json::array();
    for (const auto& l : m.basis.linears) {
        linears.push_back({{"var", l.var}, {"lower", l.lower}, {"upper", l.upper}, {"scale", l.scale}});
    }
    nlohmann::json coef = nlohmann::json::array();
    for (Eigen::Index g = 0; g < m.coef.rows(); ++g) {
        coef.push_back(to_vec(m.coef.row(g).transpose()));
    }
    return nlohmann::json{
        {"format_version", kModelFormatVersion},
        {"T", m.T()},
        {"covariates", m.names},
        {"rules", rules},
        {"linears", linears},
        {"intercepts", to_vec(m.intercepts)},
        {"coef", coef},
        {"supports", to_vec(m.supports)},
        {"linear_sds", to_vec(m.linear_sds)},
        {"meta", {{"learner", m.meta.learner}, {"ensemble", m.meta.ensemble}, {"lambda", m.meta.lambda},
                  {"seed", m.meta.seed}}},
    };
}

FittedModel model_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("unsupported model format_version " + std::to_string(version));
        }
        FittedModel m;
        m.names = j.at("covariates").get<std::vector<std::string>>();
        for (const auto& r : j.at("rules")) {
            std::vector<Condition> conds;
            for (const auto& c : r.at("conditions")) {
                conds.push_back({c.at("var").get<int>(), read_bound(c.at("lower"), -kInf),
                                 read_bound(c.at("upper"), kInf)});
            }
            m.basis.rules.emplace_back(conds);
        }
        for (const auto& l : j.at("linears")) {
            m.basis.linears.push_back({l.at("var").get<int>(), l.at("lower").get<double>(),
                                       l.at("upper").get<double>(), l.at("scale").get<double>()});
        }
        m.intercepts = from_vec(j.at("intercepts").get<std::vector<double>>());
        const auto rows = j.at("coef").get<std::vector<std::vector<double>>>();
        m.coef.resize(static_cast<Eigen::Index>(rows.size()), m.intercepts.size());
        for (std::size_t g = 0; g < rows.size(); ++g) {
            if (static_cast<Eigen::Index>(rows[g].size()) != m.intercepts.size()) {
                throw DimensionError("model coefficient row " + std::to_string(g) + " has the wrong length");
            }
            for (std::size_t t = 0; t < rows[g].size(); ++t) m.coef(g, t) = rows[g][t];
        }
        m.supports = from_vec(j.at("supports").get<std::vector<double>>());
        m.linear_sds = from_vec(j.at("linear_sds").get<std::vector<double>>());
        const auto& meta = j.at("meta");
        m.meta.learner = meta.at("learner").get<std::string>();
        m.meta.ensemble = meta.at("ensemble").get<std::string>();
        m.meta.lambda = meta.at("lambda").get<double>();
        m.meta.seed = meta.at("seed").get<std::uint64_t>();
        if (j.at("T").get<int>() != m.T()) throw DimensionError("model T disagrees with its intercepts");
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

void save_model(const std::string& path, const FittedModel& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model file '" + path + "'");
    out << model_to_json(m).dump(2) << '\n';
}

FittedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

void write_importance(std::ostream& out, const FittedModel& m, int t1, int t2) {
    const Eigen::VectorXd imp = m.base_importance(t1, t2);
    std::vector<std::string> header{"kind", "definition", "t1", "t2", "importance", "support"};
    for (int t = 0; t <= m.T(); ++t) header.push_back("coef_arm" + std::to_string(t));
    csv::write_row(out, header);
    std::vector<int> order;
    for (int g = 0; g < m.basis.n_groups(); ++g) {
        if ((m.coef.row(g).array() != 0.0).any()) order.push_back(g);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return imp[a] > imp[b]; });
    for (int g : order) {
        const bool rule = g < m.basis.n_rules();
        std::vector<std::string> row{rule ? "rule" : "linear", m.basis.describe(g, m.names), std::to_string(t1),
                                     std::to_string(t2), csv::format_double(imp[g]),
                                     rule ? csv::format_double(m.supports[g]) : "NA"};
        for (int t = 0; t <= m.T(); ++t) row.push_back(csv::format_double(m.coef(g, t)));
        csv::write_row(out, row);
    }
}

void write_variable_importance(std::ostream& out, const FittedModel& m, int t1, int t2) {
    const Eigen::VectorXd imp = m.variable_importance(t1, t2);
    csv::write_row(out, {"variable", "t1", "t2", "importance"});
    for (int j = 0; j < m.p(); ++j) {
        csv::write_row(out, {m.names[j], std::to_string(t1), std::to_string(t2), csv::format_double(imp[j])});
    }
}

}  // namespace rulehte
