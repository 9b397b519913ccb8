// plf: probabilistic short-term load forecasting command line tool.
//
// Subcommands: ingest, stats, train, predict, evaluate, compare.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "plf/plf.hpp"

namespace fs = std::filesystem;
using namespace plf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
    std::map<std::string, std::string> values;

    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"hidden_sizes", "100,100,100"}, {"n_k", "3"},        {"psi", "0.2"},
            {"eps_floor", "1e-8"},           {"l2_penalty", "0.01"}, {"temperature", "0.01"},
            {"lr", "0.001"},                 {"batch_size", "512"},  {"max_epochs", "10000"},
            {"patience", "50"},              {"n_e", "5"},           {"m_total", "500"},
            {"pacf_max_lag", "60"},
        };
        return d;
    }

    static RunConfig load(const std::string& path) {
        RunConfig cfg;
        cfg.values = defaults();
        if (path.empty()) return cfg;
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                auto b = s.find_first_not_of(" \t\r");
                auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ContractError(path + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (!defaults().count(key))
                throw ContractError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                                    "'");
            cfg.values[key] = value;
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values[key] = value; }

    double num(const std::string& key) const { return std::stod(values.at(key)); }
    std::size_t count(const std::string& key) const {
        return static_cast<std::size_t>(std::stoull(values.at(key)));
    }

    std::vector<std::size_t> sizes(const std::string& key) const {
        std::vector<std::size_t> out;
        std::istringstream is(values.at(key));
        std::string tok;
        while (std::getline(is, tok, ',')) out.push_back(std::stoull(tok));
        return out;
    }

    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values) out += k + " = " + v + "\n";
        return out;
    }
};

void write_out(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    io::write_text((dir / name).string(), content);
}

ModelSpec spec_from_config(const RunConfig& cfg, Variant v) {
    ModelSpec s;
    s.variant = v;
    s.hidden_sizes = cfg.sizes("hidden_sizes");
    s.n_k = (v == Variant::GaussHomo || v == Variant::GaussHete) ? 1 : cfg.count("n_k");
    s.l2_penalty = cfg.num("l2_penalty");
    s.temperature = cfg.num("temperature");
    s.head.n_k = s.n_k;
    s.head.psi = cfg.num("psi");
    s.head.eps_floor = cfg.num("eps_floor");
    return s;
}

TrainConfig train_config(const RunConfig& cfg, std::uint64_t seed) {
    TrainConfig t;
    t.lr = cfg.num("lr");
    t.batch_size = cfg.count("batch_size");
    t.max_epochs = cfg.count("max_epochs");
    t.patience = cfg.count("patience");
    t.seed = seed;
    return t;
}

std::string stats_csv(const SummaryStats& st) {
    std::string out = "stat,kwh\n";
    out += "mean," + io::fmt_double(st.mean) + "\n";
    out += "std," + io::fmt_double(st.std) + "\n";
    out += "q25," + io::fmt_double(st.q25) + "\n";
    out += "q50," + io::fmt_double(st.q50) + "\n";
    out += "q75," + io::fmt_double(st.q75) + "\n";
    return out;
}

std::string pacf_csv(const std::vector<double>& pc) {
    std::string out = "lag,pacf\n";
    for (std::size_t k = 0; k < pc.size(); ++k)
        out += std::to_string(k) + "," + io::fmt_double(pc[k]) + "\n";
    return out;
}

// roster variants: single models plus the two 5-member ensembles
struct Roster {
    Variant variant;
    bool ensemble;
};

Roster roster_from_name(const std::string& name) {
    if (name == "gauss-homo") return {Variant::GaussHomo, false};
    if (name == "gauss-hete") return {Variant::GaussHete, false};
    if (name == "det-mdn") return {Variant::DetMdn, false};
    if (name == "bay-mdn-vi") return {Variant::BayMdn, false};
    if (name == "bay-mdn-de") return {Variant::DetMdn, true};
    if (name == "bay-mdn-devi") return {Variant::BayMdn, true};
    throw ContractError("unknown variant '" + name + "'");
}

int cmd_ingest(const std::string& input, const std::string& household, const std::string& out,
               const RunConfig& cfg) {
    LoadSeries raw = ingest_load_csv(input, household);
    LoadSeries hourly = resample_hourly(raw);
    RawFeatures feats = build_features(hourly);
    if (feats.targets.empty()) throw DataError("series too short: no supervised samples");
    SupervisedSet ds = split_chronological(feats);

    fs::path dir(out);
    write_out(dir, "dataset.json", io::dataset_to_json(ds, household).dump(2) + "\n");
    write_out(dir, "stats.csv", stats_csv(describe(raw)));
    write_out(dir, "pacf.csv", pacf_csv(pacf(raw, cfg.count("pacf_max_lag"))));
    write_out(dir, "config_echo.txt", cfg.echo());
    std::printf("ingested %zu readings -> %zu samples (train %zu / val %zu / test %zu)\n",
                raw.readings.size(), ds.size(), ds.n_train, ds.n_val, ds.n_test());
    return kExitOk;
}

int cmd_stats(const std::string& input, const std::string& household, const std::string& out,
              const RunConfig& cfg) {
    LoadSeries raw = ingest_load_csv(input, household);
    SummaryStats st = describe(raw);
    auto pc = pacf(raw, cfg.count("pacf_max_lag"));
    std::printf("%s", stats_csv(st).c_str());
    if (!out.empty()) {
        fs::path dir(out);
        write_out(dir, "stats.csv", stats_csv(st));
        write_out(dir, "pacf.csv", pacf_csv(pc));
        write_out(dir, "config_echo.txt", cfg.echo());
    }
    return kExitOk;
}

int cmd_train(const std::string& dataset, const std::string& variant, std::uint64_t seed,
              const std::string& out, const RunConfig& cfg) {
    SupervisedSet ds = io::dataset_from_json(io::load_json(dataset));
    Roster roster = roster_from_name(variant);
    ModelSpec spec = spec_from_config(cfg, roster.variant);
    TrainConfig tc = train_config(cfg, seed);
    std::size_t n_e = roster.ensemble ? cfg.count("n_e") : 1;

    Ensemble e = train_ensemble(spec, ds, tc, n_e);

    fs::path dir(out);
    fs::create_directories(dir);
    io::save_ensemble(e, dir.string(), variant, seed);
    for (std::size_t m = 0; m < e.size(); ++m)
        write_out(dir, "history_" + std::to_string(m) + ".txt",
                  io::history_table(e.members[m].history));
    write_out(dir, "config_echo.txt", cfg.echo());
    std::printf("trained %s: %zu member(s), %zu epochs (member 0)\n", variant.c_str(), e.size(),
                e.members[0].history.size());
    return kExitOk;
}

std::vector<double> raw_input_row(const SupervisedSet& ds, std::size_t i) {
    std::vector<double> x = ds.input_row(i);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = destandardize(x[j], ds.input_scalers[j]);
    return x;
}

int cmd_predict(const std::string& model, const std::string& dataset, std::uint64_t seed,
                const std::string& out, const RunConfig& cfg) {
    Ensemble e = io::load_ensemble(model);
    SupervisedSet ds = io::dataset_from_json(io::load_json(dataset));
    std::size_t draws = default_draws_per_member(e.size(), cfg.count("m_total"));
    const std::vector<double> qs = {0.05, 0.25, 0.50, 0.75, 0.95};

    std::string csv = "timestamp,actual_kwh,mean,q05,q25,q50,q75,q95\n";
    for (std::size_t i = ds.test_begin(); i < ds.test_end(); ++i) {
        PredictiveSamples s = predict_samples(e, raw_input_row(ds, i), draws, seed, i);
        PredictiveSummary sm = predictive_summary(s, qs);
        csv += format_iso8601(ds.timestamps[i]) + "," +
               io::fmt_double(destandardize(ds.targets[i], ds.target_scaler)) + "," +
               io::fmt_double(sm.mean);
        for (double q : sm.quantiles) csv += "," + io::fmt_double(q);
        csv += "\n";
    }
    fs::path dir(out);
    write_out(dir, "predictions.csv", csv);
    write_out(dir, "config_echo.txt", cfg.echo());
    return kExitOk;
}

int cmd_evaluate(const std::string& model, const std::string& dataset, std::uint64_t seed,
                 const std::string& out, const RunConfig& cfg) {
    Ensemble e = io::load_ensemble(model);
    SupervisedSet ds = io::dataset_from_json(io::load_json(dataset));
    ScoreReport r = evaluate(e, ds, cfg.count("m_total"), seed);
    fs::path dir(out);
    write_out(dir, "report.csv", io::score_report_csv(r));
    write_out(dir, "config_echo.txt", cfg.echo());
    std::printf("overall CRPS: %s kWh\n", io::fmt_double(r.overall).c_str());
    return cmd_predict(model, dataset, seed, (dir / "quantiles").string(), cfg);
}

int cmd_compare(const std::vector<std::string>& reports, const std::string& baseline,
                const std::string& out, const RunConfig& cfg) {
    std::map<std::string, double> overall;
    for (const std::string& spec : reports) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw ContractError("--report expects variant=path, got '" + spec + "'");
        overall[spec.substr(0, eq)] = io::overall_from_report_csv(spec.substr(eq + 1));
    }
    auto table = improvement_table(overall, baseline);
    fs::path dir(out);
    write_out(dir, "improvement.csv", io::improvement_csv(table, baseline));
    write_out(dir, "config_echo.txt", cfg.echo());
    for (const auto& [name, pct] : table)
        std::printf("%s: %+.2f%%\n", name.c_str(), pct);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic household load forecasting with Bayesian mixture density networks"};
    app.require_subcommand(1);

    std::string input, household, dataset, model, variant, out, config_path, baseline;
    std::uint64_t seed = 0;
    std::vector<std::string> reports;
    std::vector<std::string> overrides;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "TOML-style key = value configuration file");
        sub->add_option("--set", overrides, "config override key=value (wins over --config)");
        sub->add_option("--out", out, "output directory")->required();
    };

    auto* ingest = app.add_subcommand("ingest", "raw CSV -> dataset artifact + stats sidecars");
    ingest->add_option("--input", input, "raw half-hourly CSV")->required();
    ingest->add_option("--household", household, "household id to keep")->required();
    add_common(ingest);

    auto* stats = app.add_subcommand("stats", "descriptive statistics and PACF of a raw series");
    stats->add_option("--input", input)->required();
    stats->add_option("--household", household)->required();
    stats->add_option("--config", config_path);
    stats->add_option("--set", overrides);
    stats->add_option("--out", out);

    auto* train = app.add_subcommand("train", "train one variant on a dataset artifact");
    train->add_option("--dataset", dataset)->required();
    train->add_option("--variant", variant,
                      "gauss-homo | gauss-hete | det-mdn | bay-mdn-vi | bay-mdn-de | bay-mdn-devi")
        ->required();
    train->add_option("--seed", seed);
    add_common(train);

    auto* predict = app.add_subcommand("predict", "test-split quantile forecasts");
    predict->add_option("--model", model)->required();
    predict->add_option("--dataset", dataset)->required();
    predict->add_option("--seed", seed);
    add_common(predict);

    auto* evaluate = app.add_subcommand("evaluate", "CRPS report on the test split");
    evaluate->add_option("--model", model)->required();
    evaluate->add_option("--dataset", dataset)->required();
    evaluate->add_option("--seed", seed);
    add_common(evaluate);

    auto* compare = app.add_subcommand("compare", "improvement table across score reports");
    compare->add_option("--report", reports, "variant=report.csv (repeatable)")->required();
    compare->add_option("--baseline", baseline)->required();
    add_common(compare);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        RunConfig cfg = RunConfig::load(config_path);
        for (const std::string& ov : overrides) {
            auto eq = ov.find('=');
            if (eq == std::string::npos || !RunConfig::defaults().count(ov.substr(0, eq)))
                throw ContractError("bad --set override '" + ov + "'");
            cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
        }
        if (ingest->parsed()) return cmd_ingest(input, household, out, cfg);
        if (stats->parsed()) return cmd_stats(input, household, out, cfg);
        if (train->parsed()) return cmd_train(dataset, variant, seed, out, cfg);
        if (predict->parsed()) return cmd_predict(model, dataset, seed, out, cfg);
        if (evaluate->parsed()) return cmd_evaluate(model, dataset, seed, out, cfg);
        if (compare->parsed()) return cmd_compare(reports, baseline, out, cfg);
    } catch (const ContractError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
