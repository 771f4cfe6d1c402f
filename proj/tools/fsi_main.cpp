// fsi: financial-stress-index toolkit command-line interface.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fsi/cli.hpp"
#include "fsi/errors.hpp"
#include "fsi/gar.hpp"
#include "fsi/gdp.hpp"
#include "fsi/nsfactor.hpp"
#include "fsi/panel.hpp"
#include "fsi/rng.hpp"
#include "fsi/statespace.hpp"
#include "fsi/synth.hpp"
#include "fsi/transforms.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fsi;

struct GlobalOpts {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

std::string out_path(const GlobalOpts& g, const std::string& name) {
    fs::create_directories(g.out);
    return (fs::path(g.out) / name).string();
}

void log_verbose(const GlobalOpts& g, const std::string& msg) {
    if (g.verbose) std::cerr << "fsi: " << msg << "\n";
}

std::string format_g12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
}

std::uint64_t require_seed(const GlobalOpts& g, const std::optional<std::uint64_t>& local) {
    if (local) return *local;
    if (g.seed) return *g.seed;
    throw ConfigError("a --seed is required for stochastic commands");
}

// -------------------------------------------------------------- subcommands

void cmd_ingest(const GlobalOpts& g, const std::string& input, const std::string& aggregate) {
    TimeSeriesPanel panel = ingest_csv(input);
    if (aggregate == "mean")
        panel = aggregate_to_monthly(panel, AggregateMethod::Mean);
    else if (aggregate == "last")
        panel = aggregate_to_monthly(panel, AggregateMethod::Last);
    else if (aggregate != "none")
        throw ConfigError("--aggregate must be none, mean, or last");
    const std::string path = out_path(g, "ingested.csv");
    emit_csv(panel, path);
    log_verbose(g, "wrote " + path);
}

void cmd_transform(const GlobalOpts& g, const std::string& input, const std::string& recipe) {
    const TimeSeriesPanel panel = ingest_csv(input);
    const TimeSeriesPanel result = apply_recipe(panel, parse_recipe_file(recipe));
    const std::string path = out_path(g, "transformed.csv");
    emit_csv(result, path);
    log_verbose(g, "wrote " + path);
}

void cmd_adf(const GlobalOpts& g, const std::string& input, const std::string& spec_name,
             int max_lags, const std::string& lag_rule) {
    const TimeSeriesPanel panel = ingest_csv(input);
    const AdfSpec spec = spec_name == "ct" ? AdfSpec::ConstantTrend : AdfSpec::Constant;
    if (spec_name != "c" && spec_name != "ct")
        throw ConfigError("--spec must be c or ct");
    const AdfLagRule rule = lag_rule == "fixed" ? AdfLagRule::Fixed : AdfLagRule::Bic;
    if (lag_rule != "fixed" && lag_rule != "bic") throw ConfigError("--lag-rule must be bic or fixed");
    std::string csv = "series,statistic,p_value,lags_used,clamped\n";
    for (Eigen::Index j = 0; j < panel.cols(); ++j) {
        std::vector<double> x(static_cast<std::size_t>(panel.rows()));
        for (Eigen::Index t = 0; t < panel.rows(); ++t)
            x[static_cast<std::size_t>(t)] = panel.values(t, j);
        const AdfResult res = adf_test(x, spec, max_lags, rule);
        csv += panel.names[static_cast<std::size_t>(j)] + "," + format_g12(res.statistic) + "," +
               format_g12(res.p_value) + "," + std::to_string(res.lags_used) + "," +
               (res.p_value_clamped ? "1" : "0") + "\n";
    }
    const std::string path = out_path(g, "adf.csv");
    write_text_file(path, csv);
    std::cout << csv;
    log_verbose(g, "wrote " + path);
}

TimeSeriesPanel load_working_panel(const std::string& input, bool do_standardize) {
    TimeSeriesPanel panel = ingest_csv(input);
    if (panel.has_missing()) throw DataError("factor commands require a complete panel");
    if (do_standardize) panel = standardize(panel).first;
    return panel;
}

void cmd_factors_select(const GlobalOpts& g, const std::string& input,
                        const std::vector<int>& lags, double level, bool do_standardize) {
    const TimeSeriesPanel panel = load_working_panel(input, do_standardize);
    const auto [r, table] = factor_number_test(panel, lags, level, lags.front());
    std::string csv = "r,dof,q05,q95";
    for (int k : table.lags) csv += ",S_k" + std::to_string(k);
    for (int k : table.lags) csv += ",reject_k" + std::to_string(k);
    csv += "\n";
    for (const FactorNumberRow& row : table.rows) {
        csv += std::to_string(row.r) + "," + std::to_string(row.dof) + "," + format_g12(row.q05) +
               "," + format_g12(row.q95);
        for (double s : row.S) csv += "," + format_g12(s);
        for (bool rej : row.reject) csv += rej ? ",1" : ",0";
        csv += "\n";
    }
    write_text_file(out_path(g, "factor_table.csv"), csv);
    std::cout << "selected_r " << r << "\n" << csv;
}

void cmd_factors_estimate(const GlobalOpts& g, const std::string& input, int r,
                          const std::string& method, int draws,
                          const std::optional<std::uint64_t>& seed, int var_order,
                          bool do_standardize) {
    const TimeSeriesPanel panel = load_working_panel(input, do_standardize);
    TimeSeriesPanel factors;
    factors.dates = panel.dates;
    factors.frequency = panel.frequency;
    Eigen::MatrixXd loadings;
    nlohmann::json diag;
    diag["r"] = r;
    diag["rng_algorithm"] = Rng::kAlgorithm;
    if (method == "em") {
        const EstimatedFactorModel fit = em_estimate(panel, r, var_order);
        factors.values = fit.factors;
        loadings = fit.model.measurement;
        diag["method"] = "em";
        diag["loglik_trace"] = fit.loglik_trace;
        diag["converged"] = fit.converged;
        diag["stationary"] = fit.stationary;
        diag["explained_share"] = fit.explained_share;
    } else if (method == "bayes") {
        FfbsOptions opts;
        opts.n_draws = draws;
        opts.burn_in = std::max(draws / 5, 50);
        opts.seed = require_seed(g, seed);
        const FfbsDraws d = ffbs_sample(panel, r, var_order, opts);
        factors.values = d.factor_mean;
        loadings = Eigen::MatrixXd::Zero(panel.cols(), r);
        for (const Eigen::MatrixXd& L : d.loadings) loadings += L;
        loadings /= static_cast<double>(d.loadings.size());
        diag["method"] = "bayes";
        diag["draws"] = draws;
        diag["seed"] = opts.seed;
        diag["rejected_covariance_draws"] = d.rejected_covariance_draws;
    } else {
        throw ConfigError("--method must be em or bayes");
    }
    for (int j = 0; j < r; ++j) factors.names.push_back("factor_" + std::to_string(j + 1));
    emit_csv(factors, out_path(g, "factors.csv"));
    std::string csv = "series";
    for (int j = 0; j < r; ++j) csv += ",factor_" + std::to_string(j + 1);
    csv += "\n";
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
        csv += panel.names[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < loadings.cols(); ++j) csv += "," + format_g12(loadings(i, j));
        csv += "\n";
    }
    write_text_file(out_path(g, "loadings.csv"), csv);
    write_text_file(out_path(g, "diagnostics.json"), diag.dump(2) + "\n");
    log_verbose(g, "wrote factors.csv, loadings.csv, diagnostics.json");
}

void cmd_factors_combine(const GlobalOpts& g, const std::string& input) {
    const TimeSeriesPanel factors = ingest_csv(input);
    if (factors.has_missing()) throw DataError("factor paths must be complete");
    const std::vector<double> index = combine_factors(factors.values);
    TimeSeriesPanel out;
    out.dates = factors.dates;
    out.frequency = factors.frequency;
    out.names = {"stress_index"};
    out.values.resize(factors.rows(), 1);
    for (Eigen::Index t = 0; t < factors.rows(); ++t)
        out.values(t, 0) = index[static_cast<std::size_t>(t)];
    emit_csv(out, out_path(g, "index.csv"));
    log_verbose(g, "wrote index.csv");
}

void cmd_gdp_reconcile(const GlobalOpts& g, const std::string& quarterly_path,
                       const std::string& monthly_path, int draws, int burn,
                       const std::optional<std::uint64_t>& seed, bool no_unemployment) {
    const TimeSeriesPanel quarterly = ingest_csv(quarterly_path);
    const TimeSeriesPanel monthly = ingest_csv(monthly_path);
    MfModelConfig cfg;
    cfg.include_unemployment = !no_unemployment;
    const MixedFrequencyGdpModel model = build_mf_model(quarterly, monthly, cfg);
    ReconcileOptions opts;
    opts.n_draws = draws;
    opts.burn_in = burn;
    opts.seed = require_seed(g, seed);
    const MonthlyGdpPosterior post = reconcile_gibbs(model, opts);
    std::string csv = "date,mean,median,q05,q95\n";
    for (std::size_t t = 0; t < post.months.size(); ++t)
        csv += post.months[t].to_iso() + "," + format_g12(post.mean[t]) + "," +
               format_g12(post.median[t]) + "," + format_g12(post.q05[t]) + "," +
               format_g12(post.q95[t]) + "\n";
    write_text_file(out_path(g, "monthly_gdp.csv"), csv);
    log_verbose(g, "xi acceptance rate " + format_g12(post.xi_acceptance_rate));
}

void cmd_gar_evaluate(const GlobalOpts& g, const std::string& gdp_path,
                      const std::vector<std::string>& index_paths,
                      const std::vector<int>& horizons, const std::vector<double>& taus,
                      double window_fraction) {
    const TimeSeriesPanel gdp = ingest_csv(gdp_path);
    if (gdp.cols() < 1) throw DataError("gdp input has no value column");
    BacktestConfig cfg;
    if (!taus.empty()) cfg.tau_grid = taus;
    cfg.initial_window_fraction = window_fraction;
    std::string report =
        "model,horizon,aic,bic,qwcrps_uniform,qwcrps_centre,qwcrps_left,ks_pass,origins_used,"
        "origins_skipped\n";
    std::string pits = "model,horizon,origin,pit\n";
    std::vector<std::pair<std::string, TimeSeriesPanel>> models;
    models.emplace_back("gdp_lag_only", TimeSeriesPanel{});
    for (const std::string& p : index_paths) models.emplace_back(fs::path(p).stem().string(),
                                                                 ingest_csv(p));
    for (const auto& [name, index] : models) {
        std::vector<double> y;
        std::vector<double> risk;
        if (index.rows() == 0) {
            for (Eigen::Index t = 0; t < gdp.rows(); ++t)
                if (!is_missing(gdp.values(t, 0))) y.push_back(gdp.values(t, 0));
        } else {
            std::map<Date, double> by_date;
            for (Eigen::Index t = 0; t < index.rows(); ++t)
                by_date[index.dates[static_cast<std::size_t>(t)]] = index.values(t, 0);
            for (Eigen::Index t = 0; t < gdp.rows(); ++t) {
                const auto it = by_date.find(gdp.dates[static_cast<std::size_t>(t)]);
                if (it == by_date.end() || is_missing(gdp.values(t, 0))) continue;
                y.push_back(gdp.values(t, 0));
                risk.push_back(it->second);
            }
        }
        Eigen::MatrixXd risk_mat(static_cast<Eigen::Index>(y.size()),
                                 index.rows() == 0 ? 0 : 1);
        for (std::size_t t = 0; t < risk.size(); ++t)
            risk_mat(static_cast<Eigen::Index>(t), 0) = risk[t];
        for (int h : horizons) {
            const QuantileBacktestReport rep = backtest(y, risk_mat, h, cfg);
            report += name + "," + std::to_string(h) + "," + format_g12(rep.aic) + "," +
                      format_g12(rep.bic) + "," + format_g12(rep.qwcrps_uniform) + "," +
                      format_g12(rep.qwcrps_centre) + "," + format_g12(rep.qwcrps_left) + "," +
                      (rep.ks_pass ? "1" : "0") + "," + std::to_string(rep.origins_used) + "," +
                      std::to_string(rep.origins_skipped) + "\n";
            for (std::size_t i = 0; i < rep.pits.size(); ++i)
                pits += name + "," + std::to_string(h) + "," + std::to_string(i) + "," +
                        format_g12(rep.pits[i]) + "\n";
        }
    }
    write_text_file(out_path(g, "gar_report.csv"), report);
    write_text_file(out_path(g, "pit.csv"), pits);
    std::cout << report;
}

void cmd_synth_factor_panel(const GlobalOpts& g, int T, int m, int r1, int r2,
                            const std::optional<std::uint64_t>& seed) {
    FactorDgpSpec spec;
    spec.T = T;
    spec.m = m;
    spec.r1 = r1;
    spec.r2 = r2;
    spec.seed = require_seed(g, seed);
    const auto [panel, truth] = gen_factor_panel(spec);
    emit_csv(panel, out_path(g, "synthetic_panel.csv"));
    TimeSeriesPanel truth_panel;
    truth_panel.dates = panel.dates;
    truth_panel.frequency = panel.frequency;
    truth_panel.values = truth.factors;
    for (Eigen::Index j = 0; j < truth.factors.cols(); ++j)
        truth_panel.names.push_back("factor_" + std::to_string(j + 1));
    emit_csv(truth_panel, out_path(g, "synthetic_truth.csv"));
    log_verbose(g, "wrote synthetic_panel.csv, synthetic_truth.csv");
}

void cmd_synth_mf_gdp(const GlobalOpts& g, int months, const std::optional<std::uint64_t>& seed) {
    MfGdpSpec spec;
    spec.months = months;
    spec.seed = require_seed(g, seed);
    const MfGdpData data = gen_mf_gdp(spec);
    emit_csv(data.quarterly, out_path(g, "synthetic_quarterly.csv"));
    emit_csv(data.monthly, out_path(g, "synthetic_monthly.csv"));
    TimeSeriesPanel truth;
    truth.dates = data.monthly.dates;
    truth.frequency = Frequency::Monthly;
    truth.names = {"monthly_gdp"};
    truth.values.resize(static_cast<Eigen::Index>(data.truth.monthly_gdp.size()), 1);
    for (std::size_t t = 0; t < data.truth.monthly_gdp.size(); ++t)
        truth.values(static_cast<Eigen::Index>(t), 0) = data.truth.monthly_gdp[t];
    emit_csv(truth, out_path(g, "synthetic_gdp_truth.csv"));
    log_verbose(g, "wrote synthetic_quarterly.csv, synthetic_monthly.csv, synthetic_gdp_truth.csv");
}

void cmd_run(const GlobalOpts& g) {
    if (g.config.empty()) throw ConfigError("run requires --config");
    const KeyValueConfig kv = KeyValueConfig::parse_file(g.config);
    RunConfig cfg = RunConfig::from_config(kv, fs::path(g.config).parent_path().string());
    if (g.out != ".") cfg.output_dir = g.out;
    if (g.seed) cfg.seed = g.seed;
    const RunManifest manifest = run_pipeline(cfg);
    std::cout << manifest.to_text();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"financial stress index toolkit"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--config", g.config, "pipeline configuration file");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    std::uint64_t seed_value = 0;
    CLI::Option* seed_opt = app.add_option("--seed", seed_value, "random seed");
    app.add_flag("--verbose", g.verbose, "log progress to stderr");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "read, validate, and re-emit a CSV panel");
    std::string ingest_input, ingest_agg = "none";
    ingest->add_option("--input", ingest_input, "input CSV")->required();
    ingest->add_option("--aggregate", ingest_agg, "none|mean|last (to monthly)")
        ->capture_default_str();

    // transform
    auto* transform = app.add_subcommand("transform", "apply a transform recipe to a panel");
    std::string tr_input, tr_recipe;
    transform->add_option("--input", tr_input, "input CSV")->required();
    transform->add_option("--recipe", tr_recipe, "recipe file")->required();

    // adf
    auto* adf = app.add_subcommand("adf", "unit-root screen per column");
    std::string adf_input, adf_spec = "c", adf_rule = "bic";
    int adf_max_lags = -1;
    adf->add_option("--input", adf_input, "input CSV")->required();
    adf->add_option("--spec", adf_spec, "c|ct")->capture_default_str();
    adf->add_option("--max-lags", adf_max_lags, "max lag order (-1 = Schwert bound)")
        ->capture_default_str();
    adf->add_option("--lag-rule", adf_rule, "bic|fixed")->capture_default_str();

    // factors
    auto* factors = app.add_subcommand("factors", "factor selection and estimation");
    factors->require_subcommand(1);
    auto* fsel = factors->add_subcommand("select", "chi-square factor-number test");
    std::string fsel_input;
    std::vector<int> fsel_lags = {1, 2, 3, 4, 5};
    double fsel_level = 0.95;
    bool fsel_no_std = false;
    fsel->add_option("--input", fsel_input, "input CSV")->required();
    fsel->add_option("--lags", fsel_lags, "lag set")->delimiter(',')->capture_default_str();
    fsel->add_option("--level", fsel_level, "test level")->capture_default_str();
    fsel->add_flag("--no-standardize", fsel_no_std, "skip input standardization");

    auto* fest = factors->add_subcommand("estimate", "state-space factor estimation");
    std::string fest_input, fest_method = "em";
    int fest_r = 1, fest_draws = 1000, fest_p = 1;
    std::uint64_t fest_seed_value = 0;
    bool fest_no_std = false;
    fest->add_option("--input", fest_input, "input CSV")->required();
    fest->add_option("--r", fest_r, "number of factors")->required();
    fest->add_option("--method", fest_method, "em|bayes")->capture_default_str();
    fest->add_option("--draws", fest_draws, "posterior draws (bayes)")->capture_default_str();
    CLI::Option* fest_seed_opt = fest->add_option("--seed", fest_seed_value, "random seed");
    fest->add_option("--var-order", fest_p, "factor VAR order")->capture_default_str();
    fest->add_flag("--no-standardize", fest_no_std, "skip input standardization");

    auto* fcomb = factors->add_subcommand("combine", "average factors into one index");
    std::string fcomb_input;
    fcomb->add_option("--input", fcomb_input, "factor paths CSV")->required();

    // gdp reconcile
    auto* gdp = app.add_subcommand("gdp", "mixed-frequency GDP tools");
    gdp->require_subcommand(1);
    auto* grec = gdp->add_subcommand("reconcile", "monthly GDP posterior via Gibbs sampling");
    std::string grec_q, grec_m;
    int grec_draws = 5000, grec_burn = 1000;
    std::uint64_t grec_seed_value = 0;
    bool grec_no_u = false;
    grec->add_option("--quarterly", grec_q, "quarterly CSV (production, expenditure)")->required();
    grec->add_option("--monthly", grec_m, "monthly indicator CSV")->required();
    grec->add_option("--draws", grec_draws, "retained draws")->capture_default_str();
    grec->add_option("--burn", grec_burn, "burn-in sweeps")->capture_default_str();
    CLI::Option* grec_seed_opt = grec->add_option("--seed", grec_seed_value, "random seed");
    grec->add_flag("--no-unemployment", grec_no_u, "monthly panel has no unemployment column");

    // gar evaluate
    auto* gar = app.add_subcommand("gar", "growth-at-risk evaluation");
    gar->require_subcommand(1);
    auto* geval = gar->add_subcommand("evaluate", "expanding-window quantile backtest");
    std::string geval_gdp;
    std::vector<std::string> geval_indices;
    std::vector<int> geval_horizons = {1, 3, 6, 12};
    std::vector<double> geval_taus;
    double geval_window = 0.6;
    geval->add_option("--gdp", geval_gdp, "GDP growth CSV")->required();
    geval->add_option("--index", geval_indices, "candidate stress index CSV (repeatable)");
    geval->add_option("--horizons", geval_horizons, "forecast horizons")
        ->delimiter(',')
        ->capture_default_str();
    geval->add_option("--taus", geval_taus, "quantile grid")->delimiter(',');
    geval->add_option("--window-fraction", geval_window, "initial training fraction")
        ->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "synthetic data generators");
    synth->require_subcommand(1);
    auto* sfp = synth->add_subcommand("factor-panel", "factor-model panel with truth file");
    int sfp_T = 2000, sfp_m = 9, sfp_r1 = 2, sfp_r2 = 1;
    std::uint64_t sfp_seed_value = 0;
    sfp->add_option("--T", sfp_T, "observations")->capture_default_str();
    sfp->add_option("--m", sfp_m, "series count")->capture_default_str();
    sfp->add_option("--r1", sfp_r1, "non-stationary factors")->capture_default_str();
    sfp->add_option("--r2", sfp_r2, "stationary factors")->capture_default_str();
    CLI::Option* sfp_seed_opt = sfp->add_option("--seed", sfp_seed_value, "random seed");

    auto* smf = synth->add_subcommand("mf-gdp", "mixed-frequency GDP data with truth file");
    int smf_months = 360;
    std::uint64_t smf_seed_value = 0;
    smf->add_option("--months", smf_months, "monthly span")->capture_default_str();
    CLI::Option* smf_seed_opt = smf->add_option("--seed", smf_seed_value, "random seed");

    // run
    auto* run = app.add_subcommand("run", "full pipeline from a config file");

    try {
        app.parse(argc, argv);
        if (*seed_opt) g.seed = seed_value;
        const auto local_seed = [](CLI::Option* opt, std::uint64_t v) {
            return *opt ? std::optional<std::uint64_t>(v) : std::nullopt;
        };
        if (*ingest) cmd_ingest(g, ingest_input, ingest_agg);
        if (*transform) cmd_transform(g, tr_input, tr_recipe);
        if (*adf) cmd_adf(g, adf_input, adf_spec, adf_max_lags, adf_rule);
        if (*fsel) cmd_factors_select(g, fsel_input, fsel_lags, fsel_level, !fsel_no_std);
        if (*fest)
            cmd_factors_estimate(g, fest_input, fest_r, fest_method, fest_draws,
                                 local_seed(fest_seed_opt, fest_seed_value), fest_p,
                                 !fest_no_std);
        if (*fcomb) cmd_factors_combine(g, fcomb_input);
        if (*grec)
            cmd_gdp_reconcile(g, grec_q, grec_m, grec_draws, grec_burn,
                              local_seed(grec_seed_opt, grec_seed_value), grec_no_u);
        if (*geval)
            cmd_gar_evaluate(g, geval_gdp, geval_indices, geval_horizons, geval_taus,
                             geval_window);
        if (*sfp)
            cmd_synth_factor_panel(g, sfp_T, sfp_m, sfp_r1, sfp_r2,
                                   local_seed(sfp_seed_opt, sfp_seed_value));
        if (*smf) cmd_synth_mf_gdp(g, smf_months, local_seed(smf_seed_opt, smf_seed_value));
        if (*run) cmd_run(g);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
