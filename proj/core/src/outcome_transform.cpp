#include "rulehte/outcome_transform.hpp"

#include <ostream>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

TransformedOutcomes transform_outcomes(const Dataset& data, const GpsModel& gps) {
    if (gps.T() != data.T() || gps.p() != data.p()) {
        throw DimensionError("propensity model was fit for a different number of arms or covariates");
    }
    return transform_outcomes(data, predict_gps_rows(gps, data.x()));
}

TransformedOutcomes transform_outcomes(const Dataset& data, const Eigen::MatrixXd& propensities) {
    const int T = data.T();
    if (propensities.rows() != data.n() || propensities.cols() != T + 1) {
        throw DimensionError("propensity matrix must be n x (T+1)");
    }
    TransformedOutcomes out;
    out.z = Eigen::MatrixXd::Zero(data.n(), T);
    for (int i = 0; i < data.n(); ++i) {
        const int arm = data.w()[i];
        const double y = data.y()[i];
        const double e = propensities(i, arm);
        if (!(e > 0.0)) {
            throw NumericalError("transformed outcome: zero propensity for subject " + std::to_string(i + 1) +
                                 " in arm " + std::to_string(arm));
        }
        if (arm == 0) {
            out.z.row(i).setConstant(-y / e);
        } else {
            out.z(i, arm - 1) = y / e;
        }
    }
    return out;
}

void write_transformed(std::ostream& out, const TransformedOutcomes& z) {
    std::vector<std::string> fields(z.T());
    for (int t = 0; t < z.T(); ++t) fields[t] = "z" + std::to_string(t + 1);
    csv::write_row(out, fields);
    for (int i = 0; i < z.n(); ++i) {
        for (int t = 0; t < z.T(); ++t) fields[t] = csv::format_double(z.z(i, t));
        csv::write_row(out, fields);
    }
}

}  // namespace rulehte
