#include "fsi/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fsi/errors.hpp"
#include "fsi/nsfactor.hpp"
#include "fsi/statespace.hpp"

namespace fsi {

namespace fs = std::filesystem;

std::string sha256_bytes(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw NumericError("sha256: digest computation failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("sha256: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_bytes(buf.str());
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full))
            throw ConfigError("config: duplicate key '" + full + "'");
        cfg.values_[full] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

std::string KeyValueConfig::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::number(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
    }
}

long long KeyValueConfig::integer(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    long long v = 0;
    const auto [ptr, ec] =
        std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (ec != std::errc() || ptr != it->second.data() + it->second.size())
        throw ConfigError("config: key '" + key + "' is not an integer: '" + it->second + "'");
    return v;
}

bool KeyValueConfig::boolean(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> KeyValueConfig::number_list(const std::string& key,
                                                const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const std::string& tok : split(it->second, ',')) {
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has a non-numeric entry '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
}

std::vector<int> KeyValueConfig::integer_list(const std::string& key,
                                              const std::vector<int>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (double v : number_list(key, {})) {
        const int iv = static_cast<int>(v);
        if (static_cast<double>(iv) != v)
            throw ConfigError("config: key '" + key + "' has a non-integer entry");
        out.push_back(iv);
    }
    return out;
}

RunConfig RunConfig::from_config(const KeyValueConfig& kv, const std::string& base_dir) {
    const auto resolve = [&](const std::string& p) -> std::string {
        if (p.empty() || fs::path(p).is_absolute()) return p;
        return (fs::path(base_dir) / p).string();
    };
    RunConfig cfg;
    cfg.panel_path = resolve(kv.require("input.panel"));
    cfg.gdp_path = resolve(kv.require("input.gdp"));
    cfg.recipe_path = resolve(kv.get_or("transform.recipe", ""));
    cfg.lags = kv.integer_list("factors.lags", cfg.lags);
    cfg.level = kv.number("factors.level", cfg.level);
    cfg.r_override = static_cast<int>(kv.integer("factors.r", 0));
    cfg.var_order = static_cast<int>(kv.integer("factors.var_order", 1));
    const std::string method = kv.get_or("factors.method", "em");
    if (method == "em")
        cfg.method = EstimationMethod::Em;
    else if (method == "bayes")
        cfg.method = EstimationMethod::Bayes;
    else
        throw ConfigError("config: factors.method must be em or bayes, got '" + method + "'");
    cfg.draws = static_cast<int>(kv.integer("factors.draws", cfg.draws));
    if (kv.has("factors.seed"))
        cfg.seed = static_cast<std::uint64_t>(kv.integer("factors.seed", 0));
    cfg.standardize = kv.boolean("factors.standardize", true);
    cfg.taus = kv.number_list("gar.taus", default_tau_grid());
    cfg.horizons = kv.integer_list("gar.horizons", cfg.horizons);
    cfg.window_fraction = kv.number("gar.window_fraction", cfg.window_fraction);
    cfg.output_dir = resolve(kv.get_or("output.dir", "out"));
    return cfg;
}

void RunConfig::validate() const {
    if (panel_path.empty() || !fs::exists(panel_path))
        throw ConfigError("config: input.panel does not exist: '" + panel_path + "'");
    if (gdp_path.empty() || !fs::exists(gdp_path))
        throw ConfigError("config: input.gdp does not exist: '" + gdp_path + "'");
    if (!recipe_path.empty() && !fs::exists(recipe_path))
        throw ConfigError("config: transform.recipe does not exist: '" + recipe_path + "'");
    if (method == EstimationMethod::Bayes && !seed)
        throw ConfigError("config: factors.seed is required when factors.method = bayes");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("config: factors.level must be in (0,1)");
    if (lags.empty()) throw ConfigError("config: factors.lags must be non-empty");
    for (int k : lags)
        if (k < 1) throw ConfigError("config: factors.lags entries must be >= 1");
    if (r_override < 0) throw ConfigError("config: factors.r must be >= 0");
    if (var_order < 1) throw ConfigError("config: factors.var_order must be >= 1");
    if (draws < 1) throw ConfigError("config: factors.draws must be >= 1");
    for (double t : taus)
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("config: gar.taus must lie in (0,1)");
    for (int h : horizons)
        if (h < 1) throw ConfigError("config: gar.horizons entries must be >= 1");
    if (!(window_fraction > 0.0 && window_fraction < 1.0))
        throw ConfigError("config: gar.window_fraction must be in (0,1)");
    if (output_dir.empty()) throw ConfigError("config: output.dir must be set");
}

std::string RunManifest::to_text() const {
    std::string out;
    for (const ManifestEntry& e : entries) out += e.sha256 + "  " + e.path + "\n";
    return out;
}

std::vector<RecipeStep> parse_recipe_text(const std::string& text) {
    std::vector<RecipeStep> steps;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto fail = [&](const std::string& why) -> void {
            throw ConfigError("recipe line " + std::to_string(lineno) + ": " + why);
        };
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail("expected output = op(args)");
        RecipeStep step;
        step.output = trim(line.substr(0, eq));
        if (step.output.empty()) fail("empty output name");
        const std::string rhs = trim(line.substr(eq + 1));
        const std::size_t open = rhs.find('(');
        if (open == std::string::npos || rhs.back() != ')') fail("expected op(args)");
        const std::string op = trim(rhs.substr(0, open));
        const std::vector<std::string> args =
            split(rhs.substr(open + 1, rhs.size() - open - 2), ',');
        if (op == "cmax") {
            if (args.size() != 2) fail("cmax takes (column, window)");
            step.op = RecipeStep::Op::Cmax;
            step.col_a = args[0];
            step.param = std::stod(args[1]);
            if (step.param < 1) fail("cmax window must be >= 1");
        } else if (op == "ewsd") {
            if (args.size() != 2) fail("ewsd takes (column, decay)");
            step.op = RecipeStep::Op::Ewsd;
            step.col_a = args[0];
            step.param = std::stod(args[1]);
        } else if (op == "spread") {
            if (args.size() != 2) fail("spread takes (corp_column, govt_column)");
            step.op = RecipeStep::Op::Spread;
            step.col_a = args[0];
            step.col_b = args[1];
        } else if (op == "passthrough") {
            if (args.size() != 1) fail("passthrough takes (column)");
            step.op = RecipeStep::Op::Passthrough;
            step.col_a = args[0];
        } else {
            fail("unknown op '" + op + "'");
        }
        steps.push_back(step);
    }
    if (steps.empty()) throw ConfigError("recipe: no steps defined");
    return steps;
}

std::vector<RecipeStep> parse_recipe_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("recipe: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_recipe_text(buf.str());
}

TimeSeriesPanel apply_recipe(const TimeSeriesPanel& panel, const std::vector<RecipeStep>& steps) {
    TimeSeriesPanel out;
    out.dates = panel.dates;
    out.frequency = panel.frequency;
    out.values.resize(panel.rows(), static_cast<Eigen::Index>(steps.size()));
    Eigen::Index j = 0;
    for (const RecipeStep& step : steps) {
        out.names.push_back(step.output);
        const auto column = [&](const std::string& name) -> std::vector<double> {
            const Eigen::Index c = panel.column_index(name);
            std::vector<double> v(static_cast<std::size_t>(panel.rows()));
            for (Eigen::Index t = 0; t < panel.rows(); ++t)
                v[static_cast<std::size_t>(t)] = panel.values(t, c);
            return v;
        };
        std::vector<double> result;
        switch (step.op) {
            case RecipeStep::Op::Cmax:
                result = cmax(column(step.col_a), static_cast<int>(step.param));
                break;
            case RecipeStep::Op::Ewsd:
                result = ewsd(column(step.col_a), step.param);
                break;
            case RecipeStep::Op::Spread:
                result = corp_spread(column(step.col_a), column(step.col_b));
                break;
            case RecipeStep::Op::Passthrough:
                result = column(step.col_a);
                break;
        }
        for (Eigen::Index t = 0; t < panel.rows(); ++t)
            out.values(t, j) = result[static_cast<std::size_t>(t)];
        ++j;
    }
    out.validate();
    return out;
}

namespace {

std::string format_g12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// Drops leading rows that contain any missing cell (transform burn-ins), so
// downstream covariance machinery sees a complete panel.
TimeSeriesPanel drop_leading_missing(const TimeSeriesPanel& panel) {
    Eigen::Index first = 0;
    while (first < panel.rows() && panel.values.row(first).hasNaN()) ++first;
    if (first == 0) return panel;
    TimeSeriesPanel out;
    out.names = panel.names;
    out.frequency = panel.frequency;
    out.dates.assign(panel.dates.begin() + first, panel.dates.end());
    out.values = panel.values.bottomRows(panel.rows() - first);
    return out;
}

}  // namespace

RunManifest run_pipeline(const RunConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);

    std::vector<std::string> written;
    const auto artifact_path = [&](const std::string& name) {
        return (fs::path(config.output_dir) / name).string();
    };
    const auto write_text = [&](const std::string& name, const std::string& text) {
        const std::string path = artifact_path(name);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("pipeline: cannot write '" + path + "'");
        out << text;
        out.close();
        written.push_back(name);
    };
    const auto write_panel = [&](const std::string& name, const TimeSeriesPanel& p) {
        emit_csv(p, artifact_path(name));
        written.push_back(name);
    };

    std::string stage = "ingest";
    try {
        // ingest
        TimeSeriesPanel raw = ingest_csv(config.panel_path);
        write_panel("ingested.csv", raw);

        // transform
        stage = "transform";
        TimeSeriesPanel transformed = raw;
        if (!config.recipe_path.empty())
            transformed = apply_recipe(raw, parse_recipe_file(config.recipe_path));
        write_panel("transformed.csv", transformed);

        TimeSeriesPanel working = drop_leading_missing(transformed);
        if (config.standardize) working = standardize(working).first;

        // select
        stage = "select";
        const auto [r_selected, table] =
            factor_number_test(working, config.lags, config.level, config.lags.front());
        {
            std::string csv = "r,dof,q05,q95";
            for (int k : table.lags) csv += ",S_k" + std::to_string(k);
            for (int k : table.lags) csv += ",reject_k" + std::to_string(k);
            csv += "\n";
            for (const FactorNumberRow& row : table.rows) {
                csv += std::to_string(row.r) + "," + std::to_string(row.dof) + "," +
                       format_g12(row.q05) + "," + format_g12(row.q95);
                for (double s : row.S) csv += "," + format_g12(s);
                for (bool rej : row.reject) csv += rej ? ",1" : ",0";
                csv += "\n";
            }
            write_text("factor_table.csv", csv);
        }
        const int r = config.r_override > 0 ? config.r_override : std::max(r_selected, 1);

        // estimate
        stage = "estimate";
        TimeSeriesPanel factors;
        factors.dates = working.dates;
        factors.frequency = working.frequency;
        Eigen::MatrixXd loadings;
        nlohmann::json diag;
        diag["r"] = r;
        diag["selected_r"] = r_selected;
        diag["rng_algorithm"] = Rng::kAlgorithm;
        if (config.method == EstimationMethod::Em) {
            EstimatedFactorModel fit = em_estimate(working, r, config.var_order);
            factors.values = fit.factors;
            loadings = fit.model.measurement;
            diag["method"] = "em";
            diag["loglik_trace"] = fit.loglik_trace;
            diag["converged"] = fit.converged;
            diag["stationary"] = fit.stationary;
            diag["explained_share"] = fit.explained_share;
        } else {
            FfbsOptions opts;
            opts.n_draws = config.draws;
            opts.burn_in = std::max(config.draws / 5, 50);
            opts.seed = *config.seed;
            const FfbsDraws draws = ffbs_sample(working, r, config.var_order, opts);
            factors.values = draws.factor_mean;
            loadings = Eigen::MatrixXd::Zero(working.cols(), r);
            for (const Eigen::MatrixXd& L : draws.loadings) loadings += L;
            loadings /= static_cast<double>(draws.loadings.size());
            diag["method"] = "bayes";
            diag["draws"] = config.draws;
            diag["seed"] = *config.seed;
            diag["rejected_covariance_draws"] = draws.rejected_covariance_draws;
        }
        for (int j = 0; j < r; ++j) factors.names.push_back("factor_" + std::to_string(j + 1));
        write_panel("factors.csv", factors);
        {
            std::string csv = "series";
            for (int j = 0; j < r; ++j) csv += ",factor_" + std::to_string(j + 1);
            csv += "\n";
            for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
                csv += working.names[static_cast<std::size_t>(i)];
                for (Eigen::Index j = 0; j < loadings.cols(); ++j)
                    csv += "," + format_g12(loadings(i, j));
                csv += "\n";
            }
            write_text("loadings.csv", csv);
        }
        write_text("diagnostics.json", diag.dump(2) + "\n");

        // combine
        stage = "combine";
        const std::vector<double> index = combine_factors(factors.values);
        TimeSeriesPanel index_panel;
        index_panel.dates = factors.dates;
        index_panel.frequency = factors.frequency;
        index_panel.names = {"stress_index"};
        index_panel.values.resize(factors.rows(), 1);
        for (Eigen::Index t = 0; t < factors.rows(); ++t)
            index_panel.values(t, 0) = index[static_cast<std::size_t>(t)];
        write_panel("index.csv", index_panel);

        // backtest
        stage = "backtest";
        const TimeSeriesPanel gdp_panel = ingest_csv(config.gdp_path);
        if (gdp_panel.cols() < 1) throw DataError("pipeline: gdp input has no value column");
        std::map<Date, double> gdp_by_date;
        for (Eigen::Index t = 0; t < gdp_panel.rows(); ++t)
            if (!is_missing(gdp_panel.values(t, 0)))
                gdp_by_date[gdp_panel.dates[static_cast<std::size_t>(t)]] =
                    gdp_panel.values(t, 0);
        std::vector<double> y;
        std::vector<double> risk;
        for (Eigen::Index t = 0; t < index_panel.rows(); ++t) {
            const auto it = gdp_by_date.find(index_panel.dates[static_cast<std::size_t>(t)]);
            if (it == gdp_by_date.end()) continue;
            y.push_back(it->second);
            risk.push_back(index_panel.values(t, 0));
        }
        if (y.size() < 40)
            throw DataError("pipeline: fewer than 40 overlapping gdp/index observations");
        Eigen::MatrixXd risk_mat(static_cast<Eigen::Index>(risk.size()), 1);
        for (std::size_t t = 0; t < risk.size(); ++t)
            risk_mat(static_cast<Eigen::Index>(t), 0) = risk[t];

        BacktestConfig bt;
        bt.tau_grid = config.taus;
        bt.initial_window_fraction = config.window_fraction;
        std::string report =
            "horizon,aic,bic,qwcrps_uniform,qwcrps_centre,qwcrps_left,ks_pass,origins_used,"
            "origins_skipped\n";
        std::string pits = "horizon,origin,pit\n";
        for (int h : config.horizons) {
            const QuantileBacktestReport rep = backtest(y, risk_mat, h, bt);
            report += std::to_string(h) + "," + format_g12(rep.aic) + "," + format_g12(rep.bic) +
                      "," + format_g12(rep.qwcrps_uniform) + "," + format_g12(rep.qwcrps_centre) +
                      "," + format_g12(rep.qwcrps_left) + "," + (rep.ks_pass ? "1" : "0") + "," +
                      std::to_string(rep.origins_used) + "," +
                      std::to_string(rep.origins_skipped) + "\n";
            for (std::size_t i = 0; i < rep.pits.size(); ++i)
                pits += std::to_string(h) + "," + std::to_string(i) + "," +
                        format_g12(rep.pits[i]) + "\n";
        }
        write_text("gar_report.csv", report);
        write_text("pit.csv", pits);
    } catch (const std::exception& err) {
        for (const std::string& name : written) {
            std::error_code ec;
            fs::remove(artifact_path(name), ec);
        }
        const std::string msg = "stage " + stage + ": " + err.what();
        if (dynamic_cast<const ConfigError*>(&err)) throw ConfigError(msg);
        if (dynamic_cast<const DataError*>(&err)) throw DataError(msg);
        throw NumericError(msg);
    }

    RunManifest manifest;
    std::sort(written.begin(), written.end());
    for (const std::string& name : written)
        manifest.entries.push_back({name, sha256_file(artifact_path(name))});
    std::ofstream out(artifact_path("manifest.txt"), std::ios::binary);
    out << manifest.to_text();
    return manifest;
}

}  // namespace fsi
