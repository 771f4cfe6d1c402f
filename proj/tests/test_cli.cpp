#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fsi/cli.hpp"
#include "fsi/errors.hpp"
#include "fsi/panel.hpp"

using namespace fsi;
namespace fs = std::filesystem;

namespace {

fs::path fixtures_dir() { return fs::path(FSI_SOURCE_DIR) / "data" / "fixtures"; }

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("fsi_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FSI_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(sha256_bytes("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_bytes("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    const fs::path dir = temp_dir("sha");
    std::ofstream(dir / "v.txt", std::ios::binary) << "abc";
    CHECK(sha256_file((dir / "v.txt").string()) == sha256_bytes("abc"));
    CHECK_THROWS_AS(sha256_file((dir / "absent.txt").string()), DataError);
}

TEST_CASE("KeyValueConfig parses sections, comments, and typed accessors") {
    const KeyValueConfig kv = KeyValueConfig::parse_text(
        "# top comment\n"
        "[input]\n"
        "panel = data.csv   # trailing comment\n"
        "\n"
        "[factors]\n"
        "lags = 1, 2, 5\n"
        "level = 0.9\n"
        "draws = 250\n"
        "standardize = false\n"
        "taus = 0.05,0.5,0.95\n");
    CHECK(kv.require("input.panel") == "data.csv");
    CHECK(kv.has("factors.level"));
    CHECK_FALSE(kv.has("factors.absent"));
    CHECK(kv.number("factors.level", 0.0) == doctest::Approx(0.9));
    CHECK(kv.integer("factors.draws", 0) == 250);
    CHECK_FALSE(kv.boolean("factors.standardize", true));
    CHECK(kv.boolean("factors.missing_flag", true));
    CHECK(kv.integer_list("factors.lags", {}) == std::vector<int>{1, 2, 5});
    const std::vector<double> taus = kv.number_list("factors.taus", {});
    REQUIRE(taus.size() == 3);
    CHECK(taus[1] == doctest::Approx(0.5));
    CHECK(kv.get_or("input.absent", "zz") == "zz");
    CHECK_THROWS_AS(kv.require("input.absent"), ConfigError);
}

TEST_CASE("KeyValueConfig rejects malformed input") {
    CHECK_THROWS_AS(KeyValueConfig::parse_text("[s]\nkey_without_value\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse_text("[s]\na = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse_file("/nonexistent/path.conf"), ConfigError);
    const KeyValueConfig kv = KeyValueConfig::parse_text("[s]\nx = notanumber\n");
    CHECK_THROWS_AS(kv.number("s.x", 1.0), ConfigError);
    CHECK_THROWS_AS(kv.integer("s.x", 1), ConfigError);
}

TEST_CASE("RunConfig validation catches inconsistent settings") {
    const fs::path conf = fixtures_dir() / "pipeline.conf";
    const KeyValueConfig kv = KeyValueConfig::parse_file(conf.string());
    RunConfig cfg = RunConfig::from_config(kv, fixtures_dir().string());
    CHECK_NOTHROW(cfg.validate());

    RunConfig bad = cfg;
    bad.method = EstimationMethod::Bayes;
    bad.seed.reset();
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.level = 1.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.window_fraction = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = cfg;
    bad.panel_path = "/nonexistent/panel.csv";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("recipe parser handles each op and rejects malformed lines") {
    const std::vector<RecipeStep> steps = parse_recipe_text(
        "# comment\n"
        "eq_cmax = cmax(equity, 24)\n"
        "fx_vol = ewsd(fx, 0.94)\n"
        "credit = spread(corp, govt)\n"
        "raw = passthrough(rate)\n");
    REQUIRE(steps.size() == 4);
    CHECK(steps[0].op == RecipeStep::Op::Cmax);
    CHECK(steps[0].output == "eq_cmax");
    CHECK(steps[0].col_a == "equity");
    CHECK(steps[0].param == doctest::Approx(24.0));
    CHECK(steps[1].op == RecipeStep::Op::Ewsd);
    CHECK(steps[1].param == doctest::Approx(0.94));
    CHECK(steps[2].op == RecipeStep::Op::Spread);
    CHECK(steps[2].col_b == "govt");
    CHECK(steps[3].op == RecipeStep::Op::Passthrough);

    CHECK_THROWS_AS(parse_recipe_text("x = unknown_op(a)\n"), ConfigError);
    CHECK_THROWS_AS(parse_recipe_text("x cmax(a, 3)\n"), ConfigError);
    CHECK_THROWS_AS(parse_recipe_text("x = cmax(a)\n"), ConfigError);
    CHECK_THROWS_AS(parse_recipe_text("x = spread(a)\n"), ConfigError);
}

TEST_CASE("apply_recipe maps columns and reports unknown names") {
    TimeSeriesPanel p;
    p.dates = monthly_calendar(Date{2015, 1, 1}, 3);
    p.names = {"a", "b"};
    p.values.resize(3, 2);
    p.values << 1, 10, 2, 20, 3, 30;
    const TimeSeriesPanel out =
        apply_recipe(p, parse_recipe_text("d = spread(b, a)\nkeep = passthrough(a)\n"));
    REQUIRE(out.names.size() == 2);
    CHECK(out.names[0] == "d");
    CHECK(out.values(0, 0) == doctest::Approx(9.0));
    CHECK(out.values(2, 1) == doctest::Approx(3.0));
    CHECK_THROWS_AS(apply_recipe(p, parse_recipe_text("z = passthrough(missing_col)\n")),
                    DataError);
}

TEST_CASE("run_pipeline writes the full artifact set and a stable manifest") {
    const fs::path conf = fixtures_dir() / "pipeline.conf";
    const KeyValueConfig kv = KeyValueConfig::parse_file(conf.string());
    RunConfig cfg = RunConfig::from_config(kv, fixtures_dir().string());
    cfg.draws = 200;
    const fs::path out1 = temp_dir("pipe1");
    cfg.output_dir = out1.string();
    const RunManifest m1 = run_pipeline(cfg);

    const std::vector<std::string> expected = {
        "diagnostics.json", "factor_table.csv", "factors.csv", "gar_report.csv",
        "index.csv",        "ingested.csv",     "loadings.csv", "pit.csv",
        "transformed.csv"};
    REQUIRE(m1.entries.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(m1.entries[i].path == expected[i]);
        CHECK(fs::exists(out1 / m1.entries[i].path));
        CHECK(sha256_file((out1 / m1.entries[i].path).string()) == m1.entries[i].sha256);
    }
    CHECK(fs::exists(out1 / "manifest.txt"));

    // Re-running into a fresh directory reproduces the manifest byte for byte.
    const fs::path out2 = temp_dir("pipe2");
    cfg.output_dir = out2.string();
    run_pipeline(cfg);
    CHECK(read_file(out1 / "manifest.txt") == read_file(out2 / "manifest.txt"));
}

TEST_CASE("cli help and exit codes") {
    CHECK(run_cli("--help") == 0);
    for (const std::string sub :
         {"ingest", "transform", "adf", "factors", "gdp", "gar", "synth", "run"})
        CHECK(run_cli(sub + " --help") == 0);
    CHECK(run_cli("factors select --help") == 0);
    CHECK(run_cli("synth factor-panel --help") == 0);

    // Unknown option -> CLI11 parse error path.
    CHECK(run_cli("--definitely-not-an-option") != 0);

    const fs::path dir = temp_dir("clirc");
    std::ofstream cs(dir / "const.csv");
    cs << "date,x\n";
    for (int t = 0; t < 60; ++t) {
        const int year = 2000 + t / 12;
        const int month = 1 + t % 12;
        cs << year << "-" << (month < 10 ? "0" : "") << month << "-01," << 1.0 << "\n";
    }
    cs.close();

    // Bad option value -> config error (2).
    CHECK(run_cli("--out " + dir.string() + " adf --input " + (dir / "const.csv").string() +
                  " --spec zz") == 2);

    // Missing or malformed data -> data error (4).
    CHECK(run_cli("--out " + dir.string() + " adf --input /nonexistent.csv") == 4);
    std::ofstream(dir / "bad.csv") << "date,x\n2020-01-01,1\n2020-01-01,2\n";
    CHECK(run_cli("--out " + dir.string() + " adf --input " + (dir / "bad.csv").string()) == 4);

    // Degenerate constant series -> numeric error (3).
    CHECK(run_cli("--out " + dir.string() + " adf --input " + (dir / "const.csv").string()) == 3);
}

TEST_CASE("cli synth and reconcile round trip") {
    const fs::path dir = temp_dir("clisynth");
    CHECK(run_cli("--out " + dir.string() + " synth mf-gdp --months 96 --seed 5") == 0);
    CHECK(fs::exists(dir / "synthetic_quarterly.csv"));
    CHECK(fs::exists(dir / "synthetic_monthly.csv"));
    CHECK(fs::exists(dir / "synthetic_gdp_truth.csv"));

    CHECK(run_cli("--out " + dir.string() + " gdp reconcile --quarterly " +
                  (dir / "synthetic_quarterly.csv").string() + " --monthly " +
                  (dir / "synthetic_monthly.csv").string() +
                  " --draws 150 --burn 50 --seed 9") == 0);
    CHECK(fs::exists(dir / "monthly_gdp.csv"));
    const TimeSeriesPanel post = ingest_csv((dir / "monthly_gdp.csv").string());
    CHECK(post.values.rows() == 96);
    CHECK(post.names == std::vector<std::string>{"mean", "median", "q05", "q95"});
}
