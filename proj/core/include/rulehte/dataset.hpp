#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rulehte {

enum class ColumnKind { continuous, binary };

/// Outcomes, arm assignments and covariates of a multi-arm study.
///
/// Arms are indexed 0..T with 0 the common control. The object is
/// validated on construction and immutable afterwards.
class Dataset {
public:
    /// Validates and infers column kinds (binary iff every value is 0 or 1).
    /// When `arms` is given it fixes T; otherwise T = max(w).
    Dataset(Eigen::VectorXd y, std::vector<int> w, Eigen::MatrixXd x,
            std::vector<std::string> names = {}, std::optional<int> arms = std::nullopt);

    int n() const noexcept { return static_cast<int>(y_.size()); }
    int p() const noexcept { return static_cast<int>(x_.cols()); }
    int T() const noexcept { return arms_; }

    const Eigen::VectorXd& y() const noexcept { return y_; }
    const std::vector<int>& w() const noexcept { return w_; }
    const Eigen::MatrixXd& x() const noexcept { return x_; }
    double x(int i, int j) const { return x_(i, j); }
    const std::vector<ColumnKind>& kinds() const noexcept { return kinds_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// Number of rows assigned to each arm 0..T.
    std::vector<int> arm_counts() const;

    /// Row subset, keeping T and covariate names.
    Dataset subset(std::span<const int> rows) const;

    /// Same covariates and arms with a replacement outcome vector.
    Dataset with_outcome(Eigen::VectorXd y) const;

private:
    Eigen::VectorXd y_;
    std::vector<int> w_;
    Eigen::MatrixXd x_;
    std::vector<ColumnKind> kinds_;
    std::vector<std::string> names_;
    int arms_ = 1;
};

/// Column-role mapping for CSV ingestion.
struct CsvSchema {
    std::string outcome = "y";
    std::string arm = "w";
    /// Covariate columns; empty means every column other than outcome and arm.
    std::vector<std::string> covariates;
    /// Fixes T when set; otherwise inferred as the largest observed arm.
    std::optional<int> arms;
};

/// Reads a header-bearing CSV. Missing or non-numeric cells and invalid arm
/// values are rejected with a DataError naming the row and column.
Dataset load_dataset(const std::string& path, const CsvSchema& schema = {});
Dataset read_dataset(std::istream& in, const CsvSchema& schema = {});

/// Writes columns outcome, arm, then covariates in order.
void write_dataset(std::ostream& out, const Dataset& data, const CsvSchema& schema = {});
void save_dataset(const std::string& path, const Dataset& data, const CsvSchema& schema = {});

}  // namespace rulehte
