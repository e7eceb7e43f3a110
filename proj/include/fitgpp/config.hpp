#pragma once

#include "fitgpp/engine.hpp"
#include "fitgpp/policies.hpp"
#include "fitgpp/workload.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace fitgpp {

inline constexpr int kConfigVersion = 1;

/// A configuration problem, tagged with the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key))
    {
    }

    [[nodiscard]] const std::string& key() const { return key_; }

private:
    std::string key_;
};

/// One entry of the experiment's policy list.
struct PolicyEntry {
    /// Unique within the experiment; names output files and report rows.
    std::string label;
    PolicyConfig policy;
    /// One run per seed; results sharing a label are averaged in reports.
    std::vector<std::uint64_t> seeds;

    friend bool operator==(const PolicyEntry&, const PolicyEntry&) = default;
};

struct SweepAxes {
    std::vector<double> s;
    std::vector<std::optional<int>> P;
    std::vector<double> te_fraction;
    std::vector<double> gp_scale;

    [[nodiscard]] bool empty() const { return s.empty() && P.empty() && te_fraction.empty() && gp_scale.empty(); }

    friend bool operator==(const SweepAxes&, const SweepAxes&) = default;
};

struct ExperimentConfig {
    std::string experiment = "default";
    std::string output_dir = "results";
    SimConfig sim;
    WorkloadSpec workload;
    /// When set, jobs come from this trace instead of the generator; missing
    /// grace periods are synthesised from `workload.gp` and `workload.seed`.
    std::optional<std::string> trace;
    std::vector<PolicyEntry> policies;
    SweepAxes sweep;
};

namespace detail {

using nlohmann::json;

inline std::string join_key(const std::string& base, std::string_view key)
{
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline void only_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed)
{
    if (!obj.is_object()) throw ConfigError(where, "expected an object");
    for (const auto& [k, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw ConfigError(join_key(where, k), "unknown key");
        }
    }
}

template <typename T>
T get_as(const json& v, const std::string& key)
{
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            throw ConfigError(key, "expected a non-negative integer");
        }
    }
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key, "has the wrong type");
    }
}

template <typename T>
void read_opt(const json& obj, const std::string& where, std::string_view key, T& out)
{
    if (const auto it = obj.find(std::string(key)); it != obj.end()) out = get_as<T>(*it, join_key(where, key));
}

inline std::optional<int> parse_cap(const json& v, const std::string& key)
{
    if (v.is_null()) return std::nullopt;
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "unlimited") return std::nullopt;
        throw ConfigError(key, "expected a positive integer, \"inf\", or null");
    }
    if (!v.is_number_integer()) throw ConfigError(key, "expected a positive integer, \"inf\", or null");
    return v.get<int>();
}

inline json cap_to_json(const std::optional<int>& p)
{
    return p ? json(*p) : json("inf");
}

inline TruncNormalSpec parse_tn(const json& v, const std::string& key, TruncNormalSpec out)
{
    only_keys(v, key, {"mean", "stddev", "lower", "upper"});
    read_opt(v, key, "mean", out.mean);
    read_opt(v, key, "stddev", out.stddev);
    read_opt(v, key, "lower", out.lower);
    read_opt(v, key, "upper", out.upper);
    try {
        validate(out);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key, e.what());
    }
    return out;
}

inline json tn_to_json(const TruncNormalSpec& t)
{
    return {{"mean", t.mean}, {"stddev", t.stddev}, {"lower", t.lower}, {"upper", t.upper}};
}

inline ClassSpec parse_class(const json& v, const std::string& key, ClassSpec out)
{
    only_keys(v, key, {"duration", "cpu", "ram_gb", "gpu"});
    if (v.contains("duration")) out.duration = parse_tn(v["duration"], join_key(key, "duration"), out.duration);
    if (v.contains("cpu")) out.cpu = parse_tn(v["cpu"], join_key(key, "cpu"), out.cpu);
    if (v.contains("ram_gb")) out.ram = parse_tn(v["ram_gb"], join_key(key, "ram_gb"), out.ram);
    if (v.contains("gpu")) out.gpu = parse_tn(v["gpu"], join_key(key, "gpu"), out.gpu);
    return out;
}

inline json class_to_json(const ClassSpec& c)
{
    return {{"duration", tn_to_json(c.duration)},
            {"cpu", tn_to_json(c.cpu)},
            {"ram_gb", tn_to_json(c.ram)},
            {"gpu", tn_to_json(c.gpu)}};
}

template <typename T>
std::vector<T> parse_list(const json& v, const std::string& key)
{
    if (!v.is_array() || v.empty()) throw ConfigError(key, "expected a non-empty list");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(get_as<T>(v[i], key + "[" + std::to_string(i) + "]"));
    return out;
}

inline PolicyEntry parse_policy(const json& v, const std::string& key)
{
    only_keys(v, key, {"name", "label", "s", "P", "seeds"});
    if (!v.contains("name")) throw ConfigError(join_key(key, "name"), "is required");
    const auto name = get_as<std::string>(v["name"], join_key(key, "name"));
    const auto kind = parse_policy_kind(name);
    if (!kind) throw ConfigError(join_key(key, "name"), "unknown policy '" + name + "'");

    PolicyEntry e;
    e.policy.kind = *kind;
    e.label = std::string(to_string(*kind));
    read_opt(v, key, "label", e.label);
    read_opt(v, key, "s", e.policy.s);
    if (v.contains("P")) e.policy.max_preemptions = parse_cap(v["P"], join_key(key, "P"));
    if (v.contains("seeds")) {
        e.seeds = parse_list<std::uint64_t>(v["seeds"], join_key(key, "seeds"));
    } else if (*kind == PolicyKind::RAND) {
        e.seeds = {1, 2, 3, 4};
    } else {
        e.seeds = {1};
    }
    e.policy.rng_seed = e.seeds.front();
    try {
        e.policy.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(key, ex.what());
    }
    // Labels become file names.
    const bool safe = !e.label.empty() && std::all_of(e.label.begin(), e.label.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.';
    });
    if (!safe) throw ConfigError(join_key(key, "label"), "must be non-empty and use only [A-Za-z0-9.-]");
    return e;
}

} // namespace detail

/// Parses an experiment document. Every key is checked: unknown keys and
/// invalid values raise ConfigError naming the key.
[[nodiscard]] inline ExperimentConfig parse_config(const nlohmann::json& doc)
{
    using detail::join_key;
    using detail::read_opt;
    using nlohmann::json;

    detail::only_keys(doc, "",
                      {"config_version", "experiment", "output_dir", "simulation", "workload", "policies", "sweep"});
    if (!doc.contains("config_version")) throw ConfigError("config_version", "is required");
    if (detail::get_as<int>(doc["config_version"], "config_version") != kConfigVersion) {
        throw ConfigError("config_version", "unsupported version (expected " + std::to_string(kConfigVersion) + ")");
    }

    ExperimentConfig cfg;
    read_opt(doc, "", "experiment", cfg.experiment);
    read_opt(doc, "", "output_dir", cfg.output_dir);
    if (cfg.experiment.empty() || cfg.experiment.find('/') != std::string::npos) {
        throw ConfigError("experiment", "must be a non-empty name without '/'");
    }

    std::int64_t cpu = 32;
    double ram = 256.0;
    std::int64_t gpu = 8;
    if (doc.contains("simulation")) {
        const auto& sim = doc["simulation"];
        detail::only_keys(sim, "simulation", {"node_count", "node_capacity", "horizon", "rewind_on_preempt"});
        read_opt(sim, "simulation", "node_count", cfg.sim.node_count);
        if (sim.contains("node_capacity")) {
            const auto& c = sim["node_capacity"];
            detail::only_keys(c, "simulation.node_capacity", {"cpu", "ram_gb", "gpu"});
            read_opt(c, "simulation.node_capacity", "cpu", cpu);
            read_opt(c, "simulation.node_capacity", "ram_gb", ram);
            read_opt(c, "simulation.node_capacity", "gpu", gpu);
        }
        if (sim.contains("horizon") && !sim["horizon"].is_null()) {
            cfg.sim.horizon = detail::get_as<Minute>(sim["horizon"], "simulation.horizon");
        }
        read_opt(sim, "simulation", "rewind_on_preempt", cfg.sim.rewind_on_preempt);
    }
    if (cfg.sim.node_count == 0) throw ConfigError("simulation.node_count", "must be positive");
    try {
        cfg.sim.node_capacity = Capacity(cpu, ram, gpu);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("simulation.node_capacity", e.what());
    }

    auto& w = cfg.workload;
    w.node_count = cfg.sim.node_count;
    w.node_capacity = cfg.sim.node_capacity;
    if (doc.contains("workload")) {
        const auto& wd = doc["workload"];
        const std::string k = "workload";
        detail::only_keys(wd, k,
                          {"trace", "total_jobs", "te_fraction", "target_load", "load_model", "gp_scale", "seed", "te",
                           "be", "gp"});
        if (wd.contains("trace") && !wd["trace"].is_null()) {
            cfg.trace = detail::get_as<std::string>(wd["trace"], "workload.trace");
        }
        read_opt(wd, k, "total_jobs", w.total_jobs);
        read_opt(wd, k, "te_fraction", w.te_fraction);
        read_opt(wd, k, "target_load", w.target_load);
        if (wd.contains("load_model")) {
            const auto m = parse_load_model(detail::get_as<std::string>(wd["load_model"], "workload.load_model"));
            if (!m) throw ConfigError("workload.load_model", "expected \"offered\" or \"fifo_in_system\"");
            w.load_model = *m;
        }
        read_opt(wd, k, "gp_scale", w.gp_scale);
        read_opt(wd, k, "seed", w.seed);
        if (wd.contains("te")) w.te = detail::parse_class(wd["te"], "workload.te", w.te);
        if (wd.contains("be")) w.be = detail::parse_class(wd["be"], "workload.be", w.be);
        if (wd.contains("gp")) w.gp = detail::parse_tn(wd["gp"], "workload.gp", w.gp);
    }
    try {
        w.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("workload", e.what());
    }

    if (!doc.contains("policies")) throw ConfigError("policies", "is required");
    const auto& pl = doc["policies"];
    if (!pl.is_array() || pl.empty()) throw ConfigError("policies", "expected a non-empty list");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < pl.size(); ++i) {
        const std::string key = "policies[" + std::to_string(i) + "]";
        auto e = detail::parse_policy(pl[i], key);
        if (!labels.insert(e.label).second) {
            throw ConfigError(key + ".label", "duplicate label '" + e.label + "'");
        }
        cfg.policies.push_back(std::move(e));
    }

    if (doc.contains("sweep")) {
        const auto& sw = doc["sweep"];
        detail::only_keys(sw, "sweep", {"s", "P", "te_fraction", "gp_scale"});
        if (sw.contains("s")) {
            cfg.sweep.s = detail::parse_list<double>(sw["s"], "sweep.s");
            for (double s : cfg.sweep.s) {
                if (!(s >= 0.0)) throw ConfigError("sweep.s", "values must be >= 0");
            }
        }
        if (sw.contains("P")) {
            if (!sw["P"].is_array() || sw["P"].empty()) throw ConfigError("sweep.P", "expected a non-empty list");
            for (std::size_t i = 0; i < sw["P"].size(); ++i) {
                const auto p = detail::parse_cap(sw["P"][i], "sweep.P[" + std::to_string(i) + "]");
                if (p && *p < 1) throw ConfigError("sweep.P", "values must be >= 1 or \"inf\"");
                cfg.sweep.P.push_back(p);
            }
        }
        if (sw.contains("te_fraction")) {
            cfg.sweep.te_fraction = detail::parse_list<double>(sw["te_fraction"], "sweep.te_fraction");
            for (double f : cfg.sweep.te_fraction) {
                if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("sweep.te_fraction", "values must lie in [0, 1]");
            }
        }
        if (sw.contains("gp_scale")) {
            cfg.sweep.gp_scale = detail::parse_list<double>(sw["gp_scale"], "sweep.gp_scale");
            for (double g : cfg.sweep.gp_scale) {
                if (!(g > 0.0)) throw ConfigError("sweep.gp_scale", "values must be > 0");
            }
        }
    }
    return cfg;
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", "'" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

/// Serialises a configuration so that parse_config(to_json(c)) == c.
[[nodiscard]] inline nlohmann::json to_json(const ExperimentConfig& c)
{
    using nlohmann::json;
    json sim = {{"node_count", c.sim.node_count},
                {"node_capacity",
                 {{"cpu", c.sim.node_capacity.cpu()},
                  {"ram_gb", c.sim.node_capacity.ram()},
                  {"gpu", c.sim.node_capacity.gpu()}}},
                {"horizon", c.sim.horizon ? json(*c.sim.horizon) : json(nullptr)},
                {"rewind_on_preempt", c.sim.rewind_on_preempt}};
    const auto& w = c.workload;
    json wl = {{"trace", c.trace ? json(*c.trace) : json(nullptr)},
               {"total_jobs", w.total_jobs},
               {"te_fraction", w.te_fraction},
               {"target_load", w.target_load},
               {"load_model", std::string(to_string(w.load_model))},
               {"gp_scale", w.gp_scale},
               {"seed", w.seed},
               {"te", detail::class_to_json(w.te)},
               {"be", detail::class_to_json(w.be)},
               {"gp", detail::tn_to_json(w.gp)}};
    json pols = json::array();
    for (const auto& p : c.policies) {
        pols.push_back({{"name", std::string(to_string(p.policy.kind))},
                        {"label", p.label},
                        {"s", p.policy.s},
                        {"P", detail::cap_to_json(p.policy.max_preemptions)},
                        {"seeds", p.seeds}});
    }
    json doc = {{"config_version", kConfigVersion},
                {"experiment", c.experiment},
                {"output_dir", c.output_dir},
                {"simulation", sim},
                {"workload", wl},
                {"policies", pols}};
    json sweep = json::object();
    if (!c.sweep.s.empty()) sweep["s"] = c.sweep.s;
    if (!c.sweep.P.empty()) {
        json ps = json::array();
        for (const auto& p : c.sweep.P) ps.push_back(detail::cap_to_json(p));
        sweep["P"] = ps;
    }
    if (!c.sweep.te_fraction.empty()) sweep["te_fraction"] = c.sweep.te_fraction;
    if (!c.sweep.gp_scale.empty()) sweep["gp_scale"] = c.sweep.gp_scale;
    if (!sweep.empty()) doc["sweep"] = sweep;
    return doc;
}

} // namespace fitgpp
