#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsi/gar.hpp"
#include "fsi/panel.hpp"
#include "fsi/transforms.hpp"

namespace fsi {

// SHA-256 of a file's bytes, lowercase hex.
std::string sha256_file(const std::string& path);
std::string sha256_bytes(const std::string& bytes);

// Flat key=value configuration with [section] headers. Keys are addressed as
// "section.key"; '#' starts a comment; whitespace around tokens is ignored.
class KeyValueConfig {
  public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string require(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double number(const std::string& key, double fallback) const;
    long long integer(const std::string& key, long long fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::vector<double> number_list(const std::string& key,
                                    const std::vector<double>& fallback) const;
    std::vector<int> integer_list(const std::string& key, const std::vector<int>& fallback) const;

  private:
    std::map<std::string, std::string> values_;
};

enum class EstimationMethod { Em, Bayes };

struct RunConfig {
    // Inputs.
    std::string panel_path;
    std::string gdp_path;
    std::string recipe_path;  // empty = passthrough

    // Factor settings.
    std::vector<int> lags = {1, 2, 3};
    double level = 0.95;
    int r_override = 0;  // 0 = use the factor-number test
    int var_order = 1;
    EstimationMethod method = EstimationMethod::Em;
    int draws = 1000;
    std::optional<std::uint64_t> seed;
    bool standardize = true;

    // Growth-at-risk settings.
    std::vector<double> taus;
    std::vector<int> horizons = {1, 3};
    double window_fraction = 0.6;

    std::string output_dir = "out";

    static RunConfig from_config(const KeyValueConfig& kv, const std::string& base_dir);
    void validate() const;  // throws ConfigError
};

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::string sha256;
};

struct RunManifest {
    std::vector<ManifestEntry> entries;  // sorted by path
    std::string to_text() const;         // one "hash  path" line per entry
};

// Executes ingest -> transform -> select -> estimate -> combine -> backtest,
// writes every artifact under config.output_dir plus a manifest.txt listing
// them with content hashes. On a stage error all partial outputs are removed
// and the error is rethrown prefixed with the stage name.
RunManifest run_pipeline(const RunConfig& config);

// Transform recipes: one "output = op(args)" line per output column, ops
// cmax(col, window), ewsd(col, decay), spread(corp_col, govt_col),
// passthrough(col).
struct RecipeStep {
    enum class Op { Cmax, Ewsd, Spread, Passthrough } op;
    std::string output;
    std::string col_a;
    std::string col_b;   // spread only
    double param = 0.0;  // window or decay
};

std::vector<RecipeStep> parse_recipe_file(const std::string& path);
std::vector<RecipeStep> parse_recipe_text(const std::string& text);
TimeSeriesPanel apply_recipe(const TimeSeriesPanel& panel, const std::vector<RecipeStep>& steps);

}  // namespace fsi
