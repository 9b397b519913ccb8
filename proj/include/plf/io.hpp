#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plf/dataset.hpp"
#include "plf/ensemble.hpp"
#include "plf/errors.hpp"
#include "plf/network.hpp"
#include "plf/scoring.hpp"
#include "plf/tensor.hpp"
#include "plf/training.hpp"

namespace plf::io {

using nlohmann::json;

inline constexpr int kDatasetVersion = 1;
inline constexpr int kModelVersion = 1;

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Tensors and scalers
// ---------------------------------------------------------------------------

inline json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

inline json scaler_to_json(const Scaler& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

inline Scaler scaler_from_json(const json& j) {
    return Scaler{j.at("mean").get<double>(), j.at("std").get<double>()};
}

// ---------------------------------------------------------------------------
// Dataset artifact
// ---------------------------------------------------------------------------

inline json dataset_to_json(const SupervisedSet& ds, const std::string& household) {
    json j;
    j["schema"] = "plf-dataset";
    j["version"] = kDatasetVersion;
    j["household"] = household;
    j["n_train"] = ds.n_train;
    j["n_val"] = ds.n_val;
    j["timestamps"] = ds.timestamps;
    j["targets"] = ds.targets;
    j["inputs"] = tensor_to_json(ds.inputs);
    json scalers = json::array();
    for (const auto& s : ds.input_scalers) scalers.push_back(scaler_to_json(s));
    j["input_scalers"] = scalers;
    j["target_scaler"] = scaler_to_json(ds.target_scaler);
    return j;
}

inline SupervisedSet dataset_from_json(const json& j) {
    if (j.value("schema", "") != "plf-dataset" || j.value("version", 0) != kDatasetVersion)
        throw DataError("dataset artifact: unsupported schema/version");
    SupervisedSet ds;
    ds.n_train = j.at("n_train").get<std::size_t>();
    ds.n_val = j.at("n_val").get<std::size_t>();
    ds.timestamps = j.at("timestamps").get<std::vector<std::int64_t>>();
    ds.targets = j.at("targets").get<std::vector<double>>();
    ds.inputs = tensor_from_json(j.at("inputs"));
    for (const auto& s : j.at("input_scalers")) ds.input_scalers.push_back(scaler_from_json(s));
    ds.target_scaler = scaler_from_json(j.at("target_scaler"));
    return ds;
}

// ---------------------------------------------------------------------------
// Model artifacts: a manifest plus one flat named-tensor file per member
// ---------------------------------------------------------------------------

inline json spec_to_json(const ModelSpec& s) {
    return json{{"variant", variant_name(s.variant)},
                {"hidden_sizes", s.hidden_sizes},
                {"n_k", s.n_k},
                {"l2_penalty", s.l2_penalty},
                {"temperature", s.temperature},
                {"psi", s.head.psi},
                {"eps_floor", s.head.eps_floor}};
}

inline ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.variant = variant_from_name(j.at("variant").get<std::string>());
    s.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    s.n_k = j.at("n_k").get<std::size_t>();
    s.l2_penalty = j.at("l2_penalty").get<double>();
    s.temperature = j.at("temperature").get<double>();
    s.head.n_k = s.n_k;
    s.head.psi = j.at("psi").get<double>();
    s.head.eps_floor = j.at("eps_floor").get<double>();
    return s;
}

inline std::vector<std::string> parameter_names(const Network& net) {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        std::string base = "layer" + std::to_string(l);
        if (net.spec.bayesian()) {
            names.push_back(base + ".W.loc");
            names.push_back(base + ".W.pre_scale");
            names.push_back(base + ".b.loc");
            names.push_back(base + ".b.pre_scale");
        } else {
            names.push_back(base + ".W");
            names.push_back(base + ".b");
        }
    }
    return names;
}

inline json member_to_json(const TrainedModel& m) {
    json j;
    j["format_version"] = kModelVersion;
    j["spec"] = spec_to_json(m.spec);
    j["n_inputs"] = m.net.n_inputs;
    if (m.sigma_y) j["sigma_y"] = *m.sigma_y;
    json scalers = json::array();
    for (const auto& s : m.input_scalers) scalers.push_back(scaler_to_json(s));
    j["input_scalers"] = scalers;
    j["target_scaler"] = scaler_to_json(m.target_scaler);
    json tensors;
    auto names = parameter_names(m.net);
    auto params = m.net.parameters();
    for (std::size_t i = 0; i < names.size(); ++i) tensors[names[i]] = tensor_to_json(*params[i]);
    j["tensors"] = tensors;
    return j;
}

inline TrainedModel member_from_json(const json& j) {
    if (j.value("format_version", 0) != kModelVersion)
        throw DataError("model artifact: unsupported format version");
    TrainedModel m;
    m.spec = spec_from_json(j.at("spec"));
    std::size_t n_inputs = j.at("n_inputs").get<std::size_t>();
    // rebuild the layer stack with the serialized shapes, then overwrite
    Rng dummy(0);
    m.net = init_network(m.spec, n_inputs, dummy);
    auto names = parameter_names(m.net);
    auto params = m.net.parameters();
    const json& tensors = j.at("tensors");
    for (std::size_t i = 0; i < names.size(); ++i) {
        Tensor t = tensor_from_json(tensors.at(names[i]));
        if (t.shape != params[i]->shape)
            throw DataError("model artifact: tensor '" + names[i] + "' has shape " +
                            t.shape_str() + ", expected " + params[i]->shape_str());
        *params[i] = std::move(t);
    }
    if (j.contains("sigma_y")) m.sigma_y = j.at("sigma_y").get<double>();
    for (const auto& s : j.at("input_scalers")) m.input_scalers.push_back(scaler_from_json(s));
    m.target_scaler = scaler_from_json(j.at("target_scaler"));
    return m;
}

inline json manifest_to_json(const Ensemble& e, const std::string& roster_variant,
                             std::uint64_t seed) {
    json j;
    j["schema"] = "plf-model";
    j["version"] = kModelVersion;
    j["variant"] = roster_variant;
    j["seed"] = seed;
    j["n_members"] = e.size();
    j["member_seeds"] = e.member_seeds;
    json members = json::array();
    for (std::size_t m = 0; m < e.size(); ++m) {
        members.push_back(json{{"file", "member_" + std::to_string(m) + ".json"},
                               {"bayesian", e.members[m].spec.bayesian()}});
    }
    j["members"] = members;
    j["spec"] = spec_to_json(e.spec());
    return j;
}

inline void save_ensemble(const Ensemble& e, const std::string& dir,
                          const std::string& roster_variant, std::uint64_t seed) {
    write_text(dir + "/manifest.json", manifest_to_json(e, roster_variant, seed).dump(2) + "\n");
    for (std::size_t m = 0; m < e.size(); ++m)
        write_text(dir + "/member_" + std::to_string(m) + ".json",
                   member_to_json(e.members[m]).dump(2) + "\n");
}

inline Ensemble load_ensemble(const std::string& dir) {
    json manifest = load_json(dir + "/manifest.json");
    if (manifest.value("schema", "") != "plf-model" ||
        manifest.value("version", 0) != kModelVersion)
        throw DataError("model manifest: unsupported schema/version");
    Ensemble e;
    for (const auto& mj : manifest.at("members"))
        e.members.push_back(member_from_json(load_json(dir + "/" + mj.at("file").get<std::string>())));
    e.member_seeds = manifest.at("member_seeds").get<std::vector<std::uint64_t>>();
    if (e.members.empty()) throw DataError("model manifest: no members");
    return e;
}

// ---------------------------------------------------------------------------
// CSV / plain-text outputs
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// One overall row, 24 hourly rows, 7 weekday rows.
inline std::string score_report_csv(const ScoreReport& r) {
    std::string out = "grouping,key,crps\n";
    out += "overall,," + fmt_double(r.overall) + "\n";
    for (const auto& [h, v] : r.by_hour)
        out += "hour," + std::to_string(h) + "," + fmt_double(v) + "\n";
    for (const auto& [d, v] : r.by_weekday)
        out += "weekday," + std::to_string(d) + "," + fmt_double(v) + "\n";
    return out;
}

inline double overall_from_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("overall,,", 0) == 0) return std::stod(line.substr(9));
    }
    throw DataError(path + ": no overall row");
}

inline std::string history_table(const std::vector<EpochRecord>& history) {
    std::string out = "epoch train_loss val_loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out += std::to_string(i + 1) + " " + fmt_double(history[i].train_loss) + " " +
               fmt_double(history[i].val_loss) + "\n";
    return out;
}

inline std::string improvement_csv(const std::map<std::string, double>& table,
                                   const std::string& baseline) {
    std::string out = "variant,improvement_pct\n";
    for (const auto& [name, pct] : table) out += name + "," + fmt_double(pct) + "\n";
    out += "# baseline: " + baseline + "\n";
    return out;
}

}  // namespace plf::io
