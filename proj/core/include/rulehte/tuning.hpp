#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rulehte/dataset.hpp"
#include "rulehte/pipeline.hpp"

namespace rulehte {

/// One boosting configuration; `mean_size` is the tree-size parameter the
/// grid calls depth.
struct GridPoint {
    int n_trees = 333;
    double mean_size = 2.0;
    double shrinkage = 0.01;
};

/// Trees {333, 666, 1000} x size {2, 3, 4} x shrinkage {0.1, 0.01, 0.001}.
std::vector<GridPoint> default_grid();

struct TuneConfig {
    FitConfig base;
    std::vector<GridPoint> grid = default_grid();
    double holdout_fraction = 0.3;
    std::vector<int> arms;  ///< arms scored; empty means 1..T
    int n_groups = 5;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct TuneRow {
    GridPoint point;
    std::vector<double> per_arm;  ///< metric per scored arm (inf allowed, NaN when undefined)
    double total = 0.0;           ///< sum over arms
    std::string error;            ///< non-empty when the fit failed
};

struct TuneResult {
    std::vector<TuneRow> rows;
    std::vector<int> arms;
    std::optional<int> best;  ///< index of the minimum finite total
};

/// Index of the smallest finite value (first wins ties); empty when none is finite.
std::optional<int> select_best(const std::vector<double>& totals);

/// Stratified train/holdout split, one fit per grid point on the training
/// part, and the subgroup tuning metric on the holdout summed over arms.
TuneResult tune(const Dataset& data, const TuneConfig& cfg);

/// Columns: n_trees, mean_size, shrinkage, metric_arm<t>..., total, error.
void write_tune_table(std::ostream& out, const TuneResult& r);

}  // namespace rulehte
