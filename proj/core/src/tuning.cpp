#include "rulehte/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"
#include "rulehte/parallel.hpp"
#include "rulehte/rng.hpp"
#include "rulehte/simbench.hpp"

namespace rulehte {

std::vector<GridPoint> default_grid() {
    std::vector<GridPoint> g;
    for (int trees : {333, 666, 1000}) {
        for (double size : {2.0, 3.0, 4.0}) {
            for (double nu : {0.1, 0.01, 0.001}) g.push_back({trees, size, nu});
        }
    }
    return g;
}

std::optional<int> select_best(const std::vector<double>& totals) {
    std::optional<int> best;
    for (std::size_t k = 0; k < totals.size(); ++k) {
        if (!std::isfinite(totals[k])) continue;
        if (!best || totals[k] < totals[*best]) best = static_cast<int>(k);
    }
    return best;
}

TuneResult tune(const Dataset& data, const TuneConfig& cfg) {
    if (cfg.grid.empty()) throw ConfigError("tuning grid is empty");
    if (!(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
        throw ConfigError("holdout fraction must lie in (0, 1)");
    }
    TuneResult out;
    out.arms = cfg.arms;
    if (out.arms.empty()) {
        for (int t = 1; t <= data.T(); ++t) out.arms.push_back(t);
    }
    for (int t : out.arms) {
        if (t < 1 || t > data.T()) throw ConfigError("tuning arm " + std::to_string(t) + " outside 1..T");
    }

    // Stratified holdout: shuffle each arm and send the leading share to holdout.
    std::vector<std::vector<int>> by_arm(data.T() + 1);
    for (int i = 0; i < data.n(); ++i) by_arm[data.w()[i]].push_back(i);
    Rng rng(derive_seed(cfg.seed, {0}));
    std::vector<int> train, hold;
    for (auto& rows : by_arm) {
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto k = static_cast<std::size_t>(std::lround(cfg.holdout_fraction * static_cast<double>(rows.size())));
        hold.insert(hold.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
        train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(hold.begin(), hold.end());
    if (train.empty() || hold.empty()) throw DataError("tuning split left an empty train or holdout part");
    const Dataset dtrain = data.subset(train);
    const Dataset dhold = data.subset(hold);

    out.rows.resize(cfg.grid.size());
    parallel_for(static_cast<int>(cfg.grid.size()), cfg.jobs, [&](int k) {
        TuneRow& row = out.rows[k];
        row.point = cfg.grid[k];
        FitConfig fc = cfg.base;
        fc.n_trees = row.point.n_trees;
        fc.mean_size = row.point.mean_size;
        fc.shrinkage = row.point.shrinkage;
        fc.seed = derive_seed(cfg.seed, {1});
        fc.jobs = 1;
        try {
            const FitOutput fit = fit_model(dtrain, fc);
            const Eigen::MatrixXd hte = fit.model.predict_hte_rows(dhold.x());
            row.total = 0.0;
            for (int t : out.arms) {
                const auto bins = subgroup_eval(hte.col(t - 1), dhold, t, cfg.n_groups);
                std::vector<double> actual, est;
                for (const auto& b : bins) {
                    actual.push_back(b.actual);
                    est.push_back(b.estimated);
                }
                double m;
                try {
                    m = tune_metric(actual, est);
                } catch (const NumericalError&) {
                    m = std::numeric_limits<double>::quiet_NaN();
                }
                row.per_arm.push_back(m);
                row.total += std::isnan(m) ? kInf : m;
            }
        } catch (const std::exception& e) {
            row.error = e.what();
            row.per_arm.assign(out.arms.size(), std::numeric_limits<double>::quiet_NaN());
            row.total = kInf;
        }
    });
    std::vector<double> totals;
    for (const auto& r : out.rows) totals.push_back(r.total);
    out.best = select_best(totals);
    return out;
}

void write_tune_table(std::ostream& out, const TuneResult& r) {
    std::vector<std::string> header{"n_trees", "mean_size", "shrinkage"};
    for (int t : r.arms) header.push_back("metric_arm" + std::to_string(t));
    header.push_back("total");
    header.push_back("error");
    csv::write_row(out, header);
    for (const auto& row : r.rows) {
        std::vector<std::string> f{std::to_string(row.point.n_trees), csv::format_double(row.point.mean_size),
                                   csv::format_double(row.point.shrinkage)};
        for (double m : row.per_arm) f.push_back(csv::format_double(m));
        f.push_back(csv::format_double(row.total));
        f.push_back(row.error);
        csv::write_row(out, f);
    }
}

}  // namespace rulehte
