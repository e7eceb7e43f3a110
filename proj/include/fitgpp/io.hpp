#pragma once

#include "fitgpp/config.hpp"
#include "fitgpp/metrics.hpp"
#include "fitgpp/result.hpp"
#include "fitgpp/workload.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fitgpp {

/// A stored result that is missing or unreadable; names the file.
class ResultFileError : public std::runtime_error {
public:
    ResultFileError(const std::filesystem::path& file, const std::string& what)
        : std::runtime_error(file.string() + ": " + what), file_(file)
    {
    }

    [[nodiscard]] const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
};

namespace detail {

using nlohmann::json;

inline std::string fmt(double v)
{
    return format_double(v);
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ResultFileError(path, "missing");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ResultFileError(path, std::string("corrupt: ") + e.what());
    }
}

template <std::size_t N>
json opt_array(const std::optional<std::array<double, N>>& a)
{
    return a ? json(*a) : json(nullptr);
}

template <std::size_t N>
std::optional<std::array<double, N>> array_from(const json& v)
{
    if (v.is_null()) return std::nullopt;
    return v.get<std::array<double, N>>();
}

inline json policy_json(const PolicyConfig& p)
{
    return {{"kind", std::string(to_string(p.kind))},
            {"s", p.s},
            {"P", p.max_preemptions ? json(*p.max_preemptions) : json("inf")},
            {"rng_seed", p.rng_seed}};
}

inline PolicyConfig policy_from(const json& v)
{
    PolicyConfig p;
    const auto kind = parse_policy_kind(v.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown policy kind");
    p.kind = *kind;
    p.s = v.at("s").get<double>();
    const auto& cap = v.at("P");
    if (cap.is_string()) {
        p.max_preemptions.reset();
    } else {
        p.max_preemptions = cap.get<int>();
    }
    p.rng_seed = v.at("rng_seed").get<std::uint64_t>();
    return p;
}

inline std::string percentile_header(std::string_view prefix, std::span<const double> ps)
{
    std::string out;
    for (double p : ps) out += "," + std::string(prefix) + "p" + fmt(p);
    return out;
}

inline std::string opt_cells(const std::optional<std::array<double, 3>>& a)
{
    std::string out;
    for (std::size_t i = 0; i < 3; ++i) out += "," + (a ? fmt((*a)[i]) : std::string());
    return out;
}

inline std::string opt_cells(const std::optional<std::array<double, 4>>& a)
{
    std::string out;
    for (std::size_t i = 0; i < 4; ++i) out += "," + (a ? fmt((*a)[i]) : std::string());
    return out;
}

inline std::string opt_cell(const std::optional<double>& v)
{
    return v ? fmt(*v) : std::string();
}

} // namespace detail

[[nodiscard]] inline nlohmann::json to_json(const RunSummary& s)
{
    using detail::json;
    return {{"label", s.label},
            {"policy", detail::policy_json(s.policy)},
            {"workload_digest", s.workload_digest},
            {"truncated", s.truncated},
            {"total_jobs", s.total_jobs},
            {"unfinished_jobs", s.unfinished_jobs},
            {"slowdown", {{"te", detail::opt_array(s.slowdown.te)}, {"be", detail::opt_array(s.slowdown.be)}}},
            {"intervals", detail::opt_array(s.intervals)},
            {"interval_count", s.interval_count},
            {"preemptions",
             {{"total_jobs", s.preemptions.total_jobs},
              {"once", s.preemptions.once},
              {"twice", s.preemptions.twice},
              {"three_plus", s.preemptions.three_plus},
              {"at_least_once", s.preemptions.at_least_once}}}};
}

[[nodiscard]] inline RunSummary summary_from_json(const nlohmann::json& v)
{
    RunSummary s;
    s.label = v.at("label").get<std::string>();
    s.policy = detail::policy_from(v.at("policy"));
    s.workload_digest = v.at("workload_digest").get<std::uint64_t>();
    s.truncated = v.at("truncated").get<bool>();
    s.total_jobs = v.at("total_jobs").get<std::size_t>();
    s.unfinished_jobs = v.at("unfinished_jobs").get<std::size_t>();
    s.slowdown.te = detail::array_from<3>(v.at("slowdown").at("te"));
    s.slowdown.be = detail::array_from<3>(v.at("slowdown").at("be"));
    s.intervals = detail::array_from<4>(v.at("intervals"));
    s.interval_count = v.at("interval_count").get<std::size_t>();
    const auto& p = v.at("preemptions");
    s.preemptions.total_jobs = p.at("total_jobs").get<std::size_t>();
    s.preemptions.once = p.at("once").get<double>();
    s.preemptions.twice = p.at("twice").get<double>();
    s.preemptions.three_plus = p.at("three_plus").get<double>();
    s.preemptions.at_least_once = p.at("at_least_once").get<double>();
    return s;
}

[[nodiscard]] inline std::string slowdown_csv(const PercentileTable& t)
{
    std::string out = "class" + detail::percentile_header("", kSlowdownPercentiles) + "\n";
    if (t.te) out += "TE" + detail::opt_cells(t.te) + "\n";
    if (t.be) out += "BE" + detail::opt_cells(t.be) + "\n";
    return out;
}

[[nodiscard]] inline std::string intervals_csv(const RunSummary& s)
{
    return "count" + detail::percentile_header("", kIntervalPercentiles) + "\n" + std::to_string(s.interval_count) +
           detail::opt_cells(s.intervals) + "\n";
}

[[nodiscard]] inline std::string preemptions_csv(const PreemptionHistogram& h)
{
    return "total_jobs,once,twice,three_plus,at_least_once\n" + std::to_string(h.total_jobs) + "," +
           detail::fmt(h.once) + "," + detail::fmt(h.twice) + "," + detail::fmt(h.three_plus) + "," +
           detail::fmt(h.at_least_once) + "\n";
}

/// One row per job; waiting and slowdown are empty for unfinished jobs.
[[nodiscard]] inline std::string jobs_csv(const SimulationResult& r)
{
    std::ostringstream out;
    out << "id,class,submit,first_start,finish,duration,waiting,slowdown,grace_period,preemptions,"
           "running_minutes,draining_minutes\n";
    for (const auto& j : r.jobs) {
        out << j.id << ',' << to_string(j.job_class) << ',' << j.submit << ','
            << (j.first_start ? std::to_string(*j.first_start) : "") << ','
            << (j.finish ? std::to_string(*j.finish) : "") << ',' << j.duration << ','
            << (j.finish ? std::to_string(waiting_time(j)) : "") << ','
            << (j.finish ? detail::fmt(slowdown(j)) : "") << ',' << j.grace_period << ',' << j.preemption_count
            << ',' << j.running_minutes << ',' << j.draining_minutes << '\n';
    }
    return out.str();
}

[[nodiscard]] inline std::string events_jsonl(const SimulationResult& r)
{
    std::string out;
    for (const auto& e : r.events) {
        nlohmann::json line = {{"minute", e.minute}, {"job", e.job}, {"kind", std::string(to_string(e.kind))}};
        if (e.node) line["node"] = *e.node;
        out += line.dump() + "\n";
    }
    return out;
}

/// Writes `<stem>.{slowdown,intervals,preemptions,jobs}.csv`,
/// `<stem>.events.jsonl`, and `<stem>.summary.json` under `dir`.
inline void write_run_files(const std::filesystem::path& dir, const std::string& stem, const SimulationResult& result,
                            const RunSummary& summary)
{
    std::filesystem::create_directories(dir);
    detail::write_text(dir / (stem + ".slowdown.csv"), slowdown_csv(summary.slowdown));
    detail::write_text(dir / (stem + ".intervals.csv"), intervals_csv(summary));
    detail::write_text(dir / (stem + ".preemptions.csv"), preemptions_csv(summary.preemptions));
    detail::write_text(dir / (stem + ".jobs.csv"), jobs_csv(result));
    detail::write_text(dir / (stem + ".events.jsonl"), events_jsonl(result));
    detail::write_text(dir / (stem + ".summary.json"), to_json(summary).dump(2) + "\n");
}

/// Index of the runs stored in one result directory.
struct Manifest {
    struct Entry {
        std::string stem;
        std::string label;
        std::optional<std::string> axis;
        std::optional<std::string> value;
        std::uint64_t seed = 0;
        bool ok = false;
        std::string error;
    };

    std::string experiment;
    bool cross_workload = false;
    bool complete = false;
    std::vector<Entry> runs;
};

[[nodiscard]] inline nlohmann::json to_json(const Manifest& m)
{
    using detail::json;
    json runs = json::array();
    for (const auto& e : m.runs) {
        json r = {{"stem", e.stem}, {"label", e.label}, {"seed", e.seed}, {"status", e.ok ? "ok" : "failed"}};
        if (e.axis) r["axis"] = *e.axis;
        if (e.value) r["value"] = *e.value;
        if (!e.ok) r["error"] = e.error;
        runs.push_back(r);
    }
    return {{"experiment", m.experiment}, {"cross_workload", m.cross_workload}, {"complete", m.complete},
            {"runs", runs}};
}

[[nodiscard]] inline Manifest manifest_from_json(const nlohmann::json& v)
{
    Manifest m;
    m.experiment = v.at("experiment").get<std::string>();
    m.cross_workload = v.at("cross_workload").get<bool>();
    m.complete = v.at("complete").get<bool>();
    for (const auto& r : v.at("runs")) {
        Manifest::Entry e;
        e.stem = r.at("stem").get<std::string>();
        e.label = r.at("label").get<std::string>();
        e.seed = r.at("seed").get<std::uint64_t>();
        e.ok = r.at("status").get<std::string>() == "ok";
        if (r.contains("axis")) e.axis = r["axis"].get<std::string>();
        if (r.contains("value")) e.value = r["value"].get<std::string>();
        if (r.contains("error")) e.error = r["error"].get<std::string>();
        m.runs.push_back(std::move(e));
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m)
{
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

[[nodiscard]] inline Manifest read_manifest(const std::filesystem::path& dir)
{
    const auto path = dir / "manifest.json";
    const auto doc = detail::read_json(path);
    try {
        return manifest_from_json(doc);
    } catch (const nlohmann::json::exception& e) {
        throw ResultFileError(path, std::string("corrupt: ") + e.what());
    }
}

/// Policy table with six slowdown percentile columns.
[[nodiscard]] inline std::string slowdown_table_csv(const Report& r)
{
    std::string out = "label,runs" + detail::percentile_header("te_", kSlowdownPercentiles) +
                      detail::percentile_header("be_", kSlowdownPercentiles) +
                      ",te_p95_reduction_vs_fifo,be_p50_increase_vs_fifo,be_p95_increase_vs_fifo\n";
    for (const auto& row : r.rows) {
        out += row.label + "," + std::to_string(row.runs) + detail::opt_cells(row.slowdown.te) +
               detail::opt_cells(row.slowdown.be) + "," + detail::opt_cell(row.te_p95_reduction_vs_fifo) + "," +
               detail::opt_cell(row.be_p50_increase_vs_fifo) + "," + detail::opt_cell(row.be_p95_increase_vs_fifo) +
               "\n";
    }
    return out;
}

[[nodiscard]] inline std::string interval_table_csv(const Report& r)
{
    std::string out = "label" + detail::percentile_header("", kIntervalPercentiles) + "\n";
    for (const auto& row : r.rows) out += row.label + detail::opt_cells(row.intervals) + "\n";
    return out;
}

[[nodiscard]] inline std::string preemption_table_csv(const Report& r)
{
    std::string out = "label,once,twice,three_plus,at_least_once\n";
    for (const auto& row : r.rows) {
        const auto& h = row.preemptions;
        out += row.label + "," + detail::fmt(h.once) + "," + detail::fmt(h.twice) + "," + detail::fmt(h.three_plus) +
               "," + detail::fmt(h.at_least_once) + "\n";
    }
    return out;
}

[[nodiscard]] inline nlohmann::json to_json(const Report& r)
{
    using detail::json;
    json rows = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& row : r.rows) {
        rows.push_back({{"label", row.label},
                        {"policy", detail::policy_json(row.policy)},
                        {"runs", row.runs},
                        {"unfinished_jobs", row.unfinished_jobs},
                        {"slowdown", {{"te", detail::opt_array(row.slowdown.te)}, {"be", detail::opt_array(row.slowdown.be)}}},
                        {"intervals", detail::opt_array(row.intervals)},
                        {"preemptions",
                         {{"once", row.preemptions.once},
                          {"twice", row.preemptions.twice},
                          {"three_plus", row.preemptions.three_plus},
                          {"at_least_once", row.preemptions.at_least_once}}},
                        {"te_p95_reduction_vs_fifo", opt(row.te_p95_reduction_vs_fifo)},
                        {"be_p50_increase_vs_fifo", opt(row.be_p50_increase_vs_fifo)},
                        {"be_p95_increase_vs_fifo", opt(row.be_p95_increase_vs_fifo)}});
    }
    return {{"cross_workload", r.cross_workload}, {"rows", rows}};
}

/// Data series for one sweep axis: one line per (policy label, axis value).
[[nodiscard]] inline std::string series_csv(const Manifest& m, const Report& r)
{
    std::map<std::string, std::pair<std::string, std::string>> where; // row label -> (policy label, value)
    for (const auto& e : m.runs) {
        if (e.ok && e.axis && e.value) where.emplace(e.stem.substr(0, e.stem.find("_seed=")), std::pair{e.label, *e.value});
    }
    std::string out = "policy,axis,value" + detail::percentile_header("te_", kSlowdownPercentiles) +
                      detail::percentile_header("be_", kSlowdownPercentiles) + ",interval_p50,once,at_least_once\n";
    for (const auto& row : r.rows) {
        const auto it = where.find(row.label);
        if (it == where.end()) continue;
        const auto& axis = *std::find_if(m.runs.begin(), m.runs.end(), [](const auto& e) { return e.axis.has_value(); })->axis;
        out += it->second.first + "," + axis + "," + it->second.second + detail::opt_cells(row.slowdown.te) +
               detail::opt_cells(row.slowdown.be) + "," + (row.intervals ? detail::fmt((*row.intervals)[0]) : "") +
               "," + detail::fmt(row.preemptions.once) + "," + detail::fmt(row.preemptions.at_least_once) + "\n";
    }
    return out;
}

/// Rebuilds the comparison tables of a result directory from its manifest and
/// stored run summaries; writes them back and returns the report. Calling it
/// twice yields identical files.
inline Report render_report(const std::filesystem::path& dir)
{
    const auto manifest = read_manifest(dir);
    std::vector<RunSummary> runs;
    for (const auto& e : manifest.runs) {
        if (!e.ok) continue;
        const auto path = dir / (e.stem + ".summary.json");
        const auto doc = detail::read_json(path);
        try {
            runs.push_back(summary_from_json(doc));
        } catch (const std::exception& ex) {
            throw ResultFileError(path, std::string("corrupt: ") + ex.what());
        }
    }
    Report report = compare_report(runs, manifest.cross_workload);
    detail::write_text(dir / "table_slowdown.csv", slowdown_table_csv(report));
    detail::write_text(dir / "table_intervals.csv", interval_table_csv(report));
    detail::write_text(dir / "table_preemptions.csv", preemption_table_csv(report));
    detail::write_text(dir / "report.json", to_json(report).dump(2) + "\n");
    const bool swept = std::any_of(manifest.runs.begin(), manifest.runs.end(), [](const auto& e) { return e.axis.has_value(); });
    if (swept) detail::write_text(dir / "series.csv", series_csv(manifest, report));
    return report;
}

} // namespace fitgpp
