#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fsi/panel.hpp"
#include "fsi/rng.hpp"

using namespace fsi;

namespace {

std::string temp_csv_path(const std::string& tag) {
    return (std::filesystem::temp_directory_path() / ("fsi_test_" + tag + ".csv")).string();
}

TimeSeriesPanel random_panel(int T, int m, std::uint64_t seed) {
    Rng rng(seed);
    TimeSeriesPanel p;
    p.dates = monthly_calendar(Date{2001, 3, 1}, static_cast<std::size_t>(T));
    p.frequency = Frequency::Monthly;
    p.values.resize(T, m);
    for (int j = 0; j < m; ++j) {
        p.names.push_back("s" + std::to_string(j));
        for (int t = 0; t < T; ++t) p.values(t, j) = 10.0 * rng.normal();
    }
    return p;
}

}  // namespace

TEST_CASE("date ISO round trip and ordering") {
    const Date d = Date::parse_iso("2023-07-09");
    CHECK(d.year == 2023);
    CHECK(d.month == 7);
    CHECK(d.day == 9);
    CHECK(d.to_iso() == "2023-07-09");
    CHECK(Date{2020, 1, 31} < Date{2020, 2, 1});
    CHECK_THROWS_AS(Date::parse_iso("2023/07/09"), DataError);
    CHECK_THROWS_AS(Date::parse_iso("2023-13-01"), DataError);
}

TEST_CASE("ingest emit ingest reproduces finite values bit for bit") {
    const TimeSeriesPanel p = random_panel(40, 3, 7);
    const std::string path = temp_csv_path("roundtrip");
    emit_csv(p, path);
    const TimeSeriesPanel q = ingest_csv(path);
    emit_csv(q, path + ".2");
    const TimeSeriesPanel r = ingest_csv(path + ".2");
    REQUIRE(q.rows() == p.rows());
    for (Eigen::Index t = 0; t < q.rows(); ++t)
        for (Eigen::Index j = 0; j < q.cols(); ++j) CHECK(q.values(t, j) == r.values(t, j));
    std::remove(path.c_str());
    std::remove((path + ".2").c_str());
}

TEST_CASE("ingest handles missing cells and rejects duplicate dates") {
    const std::string path = temp_csv_path("missing");
    {
        std::ofstream out(path);
        out << "date,a,b\n2001-01-01,1.5,\n2001-02-01,,2.5\n";
    }
    const TimeSeriesPanel p = ingest_csv(path);
    CHECK(is_missing(p.values(0, 1)));
    CHECK(is_missing(p.values(1, 0)));
    CHECK(p.values(0, 0) == 1.5);
    {
        std::ofstream out(path);
        out << "date,a\n2001-01-01,1\n2001-01-01,2\n";
    }
    CHECK_THROWS_AS(ingest_csv(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("ingest sorts rows by date") {
    const std::string path = temp_csv_path("sort");
    {
        std::ofstream out(path);
        out << "date,a\n2001-03-01,3\n2001-01-01,1\n2001-02-01,2\n";
    }
    const TimeSeriesPanel p = ingest_csv(path);
    CHECK(p.values(0, 0) == 1);
    CHECK(p.values(2, 0) == 3);
    std::remove(path.c_str());
}

TEST_CASE("monthly aggregation of a constant is that constant") {
    TimeSeriesPanel p;
    for (int t = 0; t < 90; ++t) {
        const int m = 1 + t / 30;
        p.dates.push_back(Date{2002, m, 1 + t % 30});
    }
    p.names = {"c"};
    p.frequency = Frequency::Daily;
    p.values = Eigen::MatrixXd::Constant(90, 1, 4.25);
    const TimeSeriesPanel q = aggregate_to_monthly(p, AggregateMethod::Mean);
    REQUIRE(q.rows() == 3);
    for (Eigen::Index t = 0; t < q.rows(); ++t) CHECK(q.values(t, 0) == doctest::Approx(4.25));
    const TimeSeriesPanel ql = aggregate_to_monthly(p, AggregateMethod::Last);
    for (Eigen::Index t = 0; t < ql.rows(); ++t) CHECK(ql.values(t, 0) == doctest::Approx(4.25));
}

TEST_CASE("standardize maps {1,2,3} to {-1,0,1} and errors on constants") {
    TimeSeriesPanel p;
    p.dates = monthly_calendar(Date{2000, 1, 1}, 3);
    p.names = {"x"};
    p.frequency = Frequency::Monthly;
    p.values.resize(3, 1);
    p.values << 1, 2, 3;
    const auto [s, rec] = standardize(p);
    CHECK(s.values(0, 0) == doctest::Approx(-1.0));
    CHECK(s.values(1, 0) == doctest::Approx(0.0));
    CHECK(s.values(2, 0) == doctest::Approx(1.0));
    CHECK(rec.mean(0) == doctest::Approx(2.0));

    TimeSeriesPanel c = p;
    c.values.setConstant(5.0);
    CHECK_THROWS_AS(standardize(c), DataError);
}

TEST_CASE("standardize round trip and idempotence") {
    const TimeSeriesPanel p = random_panel(60, 4, 11);
    for (const StandardizeWindow w : {StandardizeWindow::FullSample, StandardizeWindow::Expanding}) {
        const auto [s, rec] = standardize(p, w);
        const TimeSeriesPanel back = destandardize(s, rec);
        for (Eigen::Index t = 0; t < p.rows(); ++t)
            for (Eigen::Index j = 0; j < p.cols(); ++j)
                CHECK(back.values(t, j) == doctest::Approx(p.values(t, j)).epsilon(1e-12));
    }
    // Standardizing a standardized panel changes nothing (full-sample).
    const auto [s1, rec1] = standardize(p);
    const auto [s2, rec2] = standardize(s1);
    for (Eigen::Index t = 0; t < p.rows(); ++t)
        for (Eigen::Index j = 0; j < p.cols(); ++j)
            CHECK(s2.values(t, j) == doctest::Approx(s1.values(t, j)).epsilon(1e-12));
}

TEST_CASE("frequency inference from date spacing") {
    CHECK(infer_frequency(monthly_calendar(Date{2000, 1, 1}, 10)) == Frequency::Monthly);
    std::vector<Date> daily;
    for (int d = 1; d <= 20; ++d) daily.push_back(Date{2000, 1, d});
    CHECK(infer_frequency(daily) == Frequency::Daily);
    std::vector<Date> quarterly;
    for (int q = 0; q < 8; ++q) quarterly.push_back(Date{2000 + q / 4, 1 + 3 * (q % 4), 1});
    CHECK(infer_frequency(quarterly) == Frequency::Quarterly);
}

TEST_CASE("panel validation rejects shape and ordering breaches") {
    TimeSeriesPanel p = random_panel(5, 2, 1);
    p.names = {"a", "a"};
    CHECK_THROWS_AS(p.validate(), DataError);
    TimeSeriesPanel q = random_panel(5, 2, 1);
    std::swap(q.dates[0], q.dates[1]);
    CHECK_THROWS_AS(q.validate(), DataError);
}
