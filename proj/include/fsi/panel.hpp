#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <compare>
#include <string>
#include <vector>

#include "fsi/errors.hpp"

namespace fsi {

struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;

    static Date parse_iso(const std::string& text);
    std::string to_iso() const;
};

enum class Frequency { Daily, Monthly, Quarterly };

std::string frequency_name(Frequency f);

inline bool is_missing(double v) { return std::isnan(v); }
inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Dated, aligned multivariate panel. Missing cells are NaN. Immutable by
// convention: operations return new panels.
struct TimeSeriesPanel {
    std::vector<Date> dates;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // T x m
    Frequency frequency = Frequency::Daily;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    bool has_missing() const;
    Eigen::Index column_index(const std::string& name) const;

    // Throws DataError on any invariant breach (non-increasing dates,
    // duplicate names, shape mismatch).
    void validate() const;
};

struct StandardizationRecord {
    std::vector<std::string> names;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;  // strictly positive
    std::string window;  // "full-sample" or "expanding"
    // Expanding mode keeps the per-row statistics actually applied, so the
    // map stays invertible.
    Eigen::MatrixXd row_mean;  // T x m, empty for full-sample
    Eigen::MatrixXd row_sd;
};

struct CsvSchema {
    std::string date_column = "date";
    Frequency frequency = Frequency::Daily;
};

TimeSeriesPanel ingest_csv(const std::string& path, const CsvSchema& schema = {});
void emit_csv(const TimeSeriesPanel& panel, const std::string& path);

enum class AggregateMethod { Mean, Last };

TimeSeriesPanel aggregate_to_monthly(const TimeSeriesPanel& panel,
                                     AggregateMethod method = AggregateMethod::Mean);

enum class StandardizeWindow { FullSample, Expanding };

std::pair<TimeSeriesPanel, StandardizationRecord> standardize(
    const TimeSeriesPanel& panel, StandardizeWindow window = StandardizeWindow::FullSample);

TimeSeriesPanel destandardize(const TimeSeriesPanel& panel, const StandardizationRecord& record);

// Infers monthly/quarterly/daily from median spacing in days.
Frequency infer_frequency(const std::vector<Date>& dates);

// Synthetic monthly calendar starting at `start`, n entries.
std::vector<Date> monthly_calendar(Date start, std::size_t n);

}  // namespace fsi
