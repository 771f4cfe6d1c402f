#include "fsi/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fsi {

Date Date::parse_iso(const std::string& text) {
    Date d;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(text);
    in >> d.year >> dash1 >> d.month >> dash2 >> d.day;
    if (in.fail() || dash1 != '-' || dash2 != '-' || d.month < 1 || d.month > 12 || d.day < 1 ||
        d.day > 31) {
        throw DataError("unparseable ISO-8601 date: '" + text + "'");
    }
    return d;
}

std::string Date::to_iso() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
    return buf;
}

std::string frequency_name(Frequency f) {
    switch (f) {
        case Frequency::Daily: return "daily";
        case Frequency::Monthly: return "monthly";
        case Frequency::Quarterly: return "quarterly";
    }
    return "?";
}

namespace {

// Days since a fixed epoch, proleptic Gregorian; only used for spacing.
long day_number(const Date& d) {
    int y = d.year;
    int m = d.month;
    if (m <= 2) {
        y -= 1;
        m += 12;
    }
    const long era = y / 400;
    const long yoe = y - era * 400;
    const long doy = (153 * (m - 3) + 2) / 5 + d.day - 1;
    const long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe;
}

}  // namespace

bool TimeSeriesPanel::has_missing() const { return values.hasNaN(); }

Eigen::Index TimeSeriesPanel::column_index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("no such series: '" + name + "'");
    return static_cast<Eigen::Index>(it - names.begin());
}

void TimeSeriesPanel::validate() const {
    if (static_cast<Eigen::Index>(dates.size()) != values.rows())
        throw DataError("panel: date count does not match row count");
    if (static_cast<Eigen::Index>(names.size()) != values.cols())
        throw DataError("panel: name count does not match column count");
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (!(dates[t - 1] < dates[t]))
            throw DataError("panel: dates not strictly increasing at row " + std::to_string(t));
    }
    std::set<std::string> seen(names.begin(), names.end());
    if (seen.size() != names.size()) throw DataError("panel: duplicate series names");
}

Frequency infer_frequency(const std::vector<Date>& dates) {
    if (dates.size() < 2) return Frequency::Daily;
    std::vector<long> gaps;
    gaps.reserve(dates.size() - 1);
    for (std::size_t t = 1; t < dates.size(); ++t)
        gaps.push_back(day_number(dates[t]) - day_number(dates[t - 1]));
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const long med = gaps[gaps.size() / 2];
    if (med <= 7) return Frequency::Daily;
    if (med <= 45) return Frequency::Monthly;
    return Frequency::Quarterly;
}

std::vector<Date> monthly_calendar(Date start, std::size_t n) {
    std::vector<Date> out;
    out.reserve(n);
    int y = start.year, m = start.month;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(Date{y, m, 1});
        if (++m > 12) {
            m = 1;
            ++y;
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

TimeSeriesPanel ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
    auto header = split_csv_line(line);
    if (header.empty() || trim(header[0]) != schema.date_column)
        throw DataError("'" + path + "': first column must be '" + schema.date_column + "'");

    TimeSeriesPanel panel;
    for (std::size_t j = 1; j < header.size(); ++j) panel.names.push_back(trim(header[j]));
    const std::size_t m = panel.names.size();
    if (m == 0) throw DataError("'" + path + "': no data columns");

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != m + 1)
            throw DataError("'" + path + "' row " + std::to_string(lineno) + ": expected " +
                            std::to_string(m + 1) + " cells, got " + std::to_string(cells.size()));
        panel.dates.push_back(Date::parse_iso(trim(cells[0])));
        std::vector<double> row(m);
        for (std::size_t j = 0; j < m; ++j) {
            const std::string cell = trim(cells[j + 1]);
            if (cell.empty()) {
                row[j] = missing_value();
                continue;
            }
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || p != cell.data() + cell.size())
                throw DataError("'" + path + "' row " + std::to_string(lineno) + ", column '" +
                                panel.names[j] + "': unparseable number '" + cell + "'");
            row[j] = v;
        }
        rows.push_back(std::move(row));
    }

    // Sort rows by date, then reject duplicates.
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return panel.dates[a] < panel.dates[b]; });
    std::vector<Date> sorted_dates(rows.size());
    panel.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted_dates[i] = panel.dates[order[i]];
        for (std::size_t j = 0; j < m; ++j)
            panel.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[order[i]][j];
    }
    for (std::size_t i = 1; i < sorted_dates.size(); ++i) {
        if (sorted_dates[i] == sorted_dates[i - 1])
            throw DataError("'" + path + "': duplicate date " + sorted_dates[i].to_iso());
    }
    panel.dates = std::move(sorted_dates);
    panel.frequency = infer_frequency(panel.dates);
    panel.validate();
    return panel;
}

void emit_csv(const TimeSeriesPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << "date";
    for (const auto& n : panel.names) out << ',' << n;
    out << '\n';
    char buf[64];
    for (Eigen::Index t = 0; t < panel.rows(); ++t) {
        out << panel.dates[static_cast<std::size_t>(t)].to_iso();
        for (Eigen::Index j = 0; j < panel.cols(); ++j) {
            out << ',';
            const double v = panel.values(t, j);
            if (!is_missing(v)) {
                std::snprintf(buf, sizeof(buf), "%.12g", v);
                out << buf;
            }
        }
        out << '\n';
    }
}

TimeSeriesPanel aggregate_to_monthly(const TimeSeriesPanel& panel, AggregateMethod method) {
    if (panel.rows() == 0) throw DataError("aggregate_to_monthly: empty panel");
    if (panel.frequency != Frequency::Daily)
        throw DataError("aggregate_to_monthly: input frequency must be daily");

    std::map<std::pair<int, int>, std::vector<Eigen::Index>> months;
    for (Eigen::Index t = 0; t < panel.rows(); ++t) {
        const auto& d = panel.dates[static_cast<std::size_t>(t)];
        months[{d.year, d.month}].push_back(t);
    }

    TimeSeriesPanel out;
    out.names = panel.names;
    out.frequency = Frequency::Monthly;
    out.values.resize(static_cast<Eigen::Index>(months.size()), panel.cols());
    Eigen::Index row = 0;
    for (const auto& [ym, idx] : months) {
        out.dates.push_back(Date{ym.first, ym.second, 1});
        for (Eigen::Index j = 0; j < panel.cols(); ++j) {
            double acc = 0.0;
            int n = 0;
            double last = missing_value();
            for (Eigen::Index t : idx) {
                const double v = panel.values(t, j);
                if (is_missing(v)) continue;
                acc += v;
                ++n;
                last = v;
            }
            if (n == 0)
                out.values(row, j) = missing_value();
            else
                out.values(row, j) = method == AggregateMethod::Mean ? acc / n : last;
        }
        ++row;
    }
    out.validate();
    return out;
}

std::pair<TimeSeriesPanel, StandardizationRecord> standardize(const TimeSeriesPanel& panel,
                                                              StandardizeWindow window) {
    TimeSeriesPanel out = panel;
    StandardizationRecord rec;
    rec.names = panel.names;
    rec.window = window == StandardizeWindow::FullSample ? "full-sample" : "expanding";
    rec.mean.resize(panel.cols());
    rec.sd.resize(panel.cols());
    if (window == StandardizeWindow::Expanding) {
        rec.row_mean.resize(panel.rows(), panel.cols());
        rec.row_sd.resize(panel.rows(), panel.cols());
    }

    for (Eigen::Index j = 0; j < panel.cols(); ++j) {
        double sum = 0.0, sumsq = 0.0;
        int n = 0;
        for (Eigen::Index t = 0; t < panel.rows(); ++t) {
            const double v = panel.values(t, j);
            if (is_missing(v)) continue;
            sum += v;
            ++n;
        }
        if (n < 2)
            throw DataError("standardize: series '" + panel.names[static_cast<std::size_t>(j)] +
                            "' has fewer than 2 observations");
        const double mean = sum / n;
        for (Eigen::Index t = 0; t < panel.rows(); ++t) {
            const double v = panel.values(t, j);
            if (is_missing(v)) continue;
            sumsq += (v - mean) * (v - mean);
        }
        const double var = sumsq / (n - 1);
        if (var <= 0.0)
            throw DataError("standardize: series '" + panel.names[static_cast<std::size_t>(j)] +
                            "' has zero variance");
        const double sd = std::sqrt(var);
        rec.mean(j) = mean;
        rec.sd(j) = sd;
        if (window == StandardizeWindow::FullSample) {
            for (Eigen::Index t = 0; t < panel.rows(); ++t) {
                const double v = panel.values(t, j);
                out.values(t, j) = is_missing(v) ? v : (v - mean) / sd;
            }
        } else {
            // Expanding: statistics through row t; rows before the second
            // observation or with degenerate variance fall back to the
            // earliest usable window.
            double esum = 0.0, esumsq = 0.0;
            int en = 0;
            double cur_mean = mean, cur_sd = sd;
            bool usable = false;
            for (Eigen::Index t = 0; t < panel.rows(); ++t) {
                const double v = panel.values(t, j);
                if (!is_missing(v)) {
                    esum += v;
                    esumsq += v * v;
                    ++en;
                    if (en >= 2) {
                        const double em = esum / en;
                        const double ev = (esumsq - en * em * em) / (en - 1);
                        if (ev > 0.0) {
                            cur_mean = em;
                            cur_sd = std::sqrt(ev);
                            usable = true;
                        }
                    }
                }
                if (!usable) {
                    cur_mean = mean;
                    cur_sd = sd;
                }
                rec.row_mean(t, j) = cur_mean;
                rec.row_sd(t, j) = cur_sd;
                out.values(t, j) = is_missing(v) ? v : (v - cur_mean) / cur_sd;
            }
        }
    }
    return {std::move(out), std::move(rec)};
}

TimeSeriesPanel destandardize(const TimeSeriesPanel& panel, const StandardizationRecord& record) {
    if (record.mean.size() != panel.cols())
        throw DataError("destandardize: record does not match panel width");
    TimeSeriesPanel out = panel;
    const bool expanding = record.row_mean.size() > 0;
    if (expanding && (record.row_mean.rows() != panel.rows()))
        throw DataError("destandardize: expanding record does not match panel length");
    for (Eigen::Index j = 0; j < panel.cols(); ++j)
        for (Eigen::Index t = 0; t < panel.rows(); ++t) {
            const double v = panel.values(t, j);
            if (is_missing(v)) {
                out.values(t, j) = v;
            } else if (expanding) {
                out.values(t, j) = v * record.row_sd(t, j) + record.row_mean(t, j);
            } else {
                out.values(t, j) = v * record.sd(j) + record.mean(j);
            }
        }
    return out;
}

}  // namespace fsi
