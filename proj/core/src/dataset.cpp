#include "rulehte/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <ostream>

#include "rulehte/csv.hpp"
#include "rulehte/error.hpp"

namespace rulehte {

Dataset::Dataset(Eigen::VectorXd y, std::vector<int> w, Eigen::MatrixXd x,
                 std::vector<std::string> names, std::optional<int> arms)
    : y_(std::move(y)), w_(std::move(w)), x_(std::move(x)), names_(std::move(names)) {
    const auto n = y_.size();
    if (n < 1) throw DataError("dataset needs at least one row");
    if (x_.cols() < 1) throw DataError("dataset needs at least one covariate");
    if (static_cast<Eigen::Index>(w_.size()) != n || x_.rows() != n) {
        throw DimensionError("dataset: y, w and X must have the same number of rows");
    }
    if (names_.empty()) {
        for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    }
    if (static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
        throw DimensionError("dataset: covariate name count does not match column count");
    }
    int max_arm = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (w_[i] < 0) throw DataError("row " + std::to_string(i + 1) + ": negative arm index");
        max_arm = std::max(max_arm, w_[i]);
        if (!std::isfinite(y_[i])) throw DataError("row " + std::to_string(i + 1) + ": non-finite outcome");
    }
    arms_ = arms.value_or(max_arm);
    if (arms_ < 1) throw DataError("dataset needs at least one non-control arm (T >= 1)");
    if (max_arm > arms_) {
        throw DataError("arm index " + std::to_string(max_arm) + " exceeds T = " + std::to_string(arms_));
    }
    kinds_.resize(x_.cols());
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
        bool binary = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = x_(i, j);
            if (!std::isfinite(v)) {
                throw DataError("row " + std::to_string(i + 1) + ", column '" + names_[j] + "': non-finite value");
            }
            if (v != 0.0 && v != 1.0) binary = false;
        }
        kinds_[j] = binary ? ColumnKind::binary : ColumnKind::continuous;
    }
}

std::vector<int> Dataset::arm_counts() const {
    std::vector<int> counts(arms_ + 1, 0);
    for (int a : w_) ++counts[a];
    return counts;
}

Dataset Dataset::subset(std::span<const int> rows) const {
    Eigen::VectorXd y(rows.size());
    std::vector<int> w(rows.size());
    Eigen::MatrixXd x(rows.size(), x_.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        int i = rows[k];
        if (i < 0 || i >= n()) throw DimensionError("subset row index out of range");
        y[k] = y_[i];
        w[k] = w_[i];
        x.row(k) = x_.row(i);
    }
    return Dataset(std::move(y), std::move(w), std::move(x), names_, arms_);
}

Dataset Dataset::with_outcome(Eigen::VectorXd y) const {
    if (y.size() != y_.size()) throw DimensionError("replacement outcome has wrong length");
    return Dataset(std::move(y), w_, x_, names_, arms_);
}

namespace {

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    auto where = [&] { return "row " + std::to_string(row) + ", column '" + col + "'"; };
    std::size_t b = cell.find_first_not_of(" \t");
    std::size_t e = cell.find_last_not_of(" \t");
    if (b == std::string::npos) throw DataError(where() + ": missing value");
    std::string_view s(cell.data() + b, e - b + 1);
    if (s == "NA" || s == "NaN" || s == "nan" || s == "null") throw DataError(where() + ": missing value");
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw DataError(where() + ": non-numeric value '" + cell + "'");
    }
    return v;
}

}  // namespace

Dataset read_dataset(std::istream& in, const CsvSchema& schema) {
    auto table = csv::read(in);
    int ycol = table.column(schema.outcome);
    int wcol = table.column(schema.arm);
    if (ycol < 0) throw DataError("outcome column '" + schema.outcome + "' not found in header");
    if (wcol < 0) throw DataError("arm column '" + schema.arm + "' not found in header");
    std::vector<int> xcols;
    std::vector<std::string> names;
    if (schema.covariates.empty()) {
        for (std::size_t j = 0; j < table.header.size(); ++j) {
            if (static_cast<int>(j) == ycol || static_cast<int>(j) == wcol) continue;
            xcols.push_back(static_cast<int>(j));
            names.push_back(table.header[j]);
        }
    } else {
        for (const auto& name : schema.covariates) {
            int c = table.column(name);
            if (c < 0) throw DataError("covariate column '" + name + "' not found in header");
            xcols.push_back(c);
            names.push_back(name);
        }
    }
    if (xcols.empty()) throw DataError("schema names no covariate columns");
    const std::size_t n = table.rows.size();
    if (n == 0) throw DataError("CSV has a header but no data rows");

    Eigen::VectorXd y(n);
    std::vector<int> w(n);
    Eigen::MatrixXd x(n, xcols.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const std::size_t data_row = i + 1;
        y[i] = parse_cell(row[ycol], data_row, schema.outcome);
        double a = parse_cell(row[wcol], data_row, schema.arm);
        if (a != std::floor(a) || a < 0 || (schema.arms && a > *schema.arms) || a > 1e6) {
            throw DataError("row " + std::to_string(data_row) + ", column '" + schema.arm +
                            "': invalid arm value '" + row[wcol] + "'");
        }
        w[i] = static_cast<int>(a);
        for (std::size_t k = 0; k < xcols.size(); ++k) {
            x(i, k) = parse_cell(row[xcols[k]], data_row, names[k]);
        }
    }
    return Dataset(std::move(y), std::move(w), std::move(x), std::move(names), schema.arms);
}

Dataset load_dataset(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return read_dataset(in, schema);
}

void write_dataset(std::ostream& out, const Dataset& data, const CsvSchema& schema) {
    std::vector<std::string> header{schema.outcome, schema.arm};
    header.insert(header.end(), data.names().begin(), data.names().end());
    csv::write_row(out, header);
    std::vector<std::string> fields(header.size());
    for (int i = 0; i < data.n(); ++i) {
        fields[0] = csv::format_double(data.y()[i]);
        fields[1] = std::to_string(data.w()[i]);
        for (int j = 0; j < data.p(); ++j) fields[2 + j] = csv::format_double(data.x(i, j));
        csv::write_row(out, fields);
    }
}

void save_dataset(const std::string& path, const Dataset& data, const CsvSchema& schema) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_dataset(out, data, schema);
}

}  // namespace rulehte
