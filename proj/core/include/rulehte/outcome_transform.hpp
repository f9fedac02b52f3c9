#pragma once

#include <Eigen/Dense>
#include <iosfwd>

#include "rulehte/dataset.hpp"
#include "rulehte/propensity.hpp"

namespace rulehte {

/// n x T inverse-propensity pseudo-outcomes; column t-1 targets the HTE of
/// arm t against control.
struct TransformedOutcomes {
    Eigen::MatrixXd z;

    int n() const noexcept { return static_cast<int>(z.rows()); }
    int T() const noexcept { return static_cast<int>(z.cols()); }
};

/// z[i][t] = I(w_i = t) y_i / e(t, x_i) - I(w_i = 0) y_i / e(0, x_i),
/// with e the model's (clipped) propensity.
TransformedOutcomes transform_outcomes(const Dataset& data, const GpsModel& gps);

/// Same, with per-row propensities supplied as an n x (T+1) matrix.
TransformedOutcomes transform_outcomes(const Dataset& data, const Eigen::MatrixXd& propensities);

/// Debug dump with columns z1..zT.
void write_transformed(std::ostream& out, const TransformedOutcomes& z);

}  // namespace rulehte
