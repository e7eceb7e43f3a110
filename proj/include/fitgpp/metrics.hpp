#pragma once

#include "fitgpp/domain.hpp"
#include "fitgpp/policies.hpp"
#include "fitgpp/result.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fitgpp {

/// 1 + waiting / execution.
[[nodiscard]] inline double slowdown(Minute waiting, Minute execution)
{
    if (execution < 1) throw std::invalid_argument("slowdown: execution time must be >= 1");
    if (waiting < 0) throw std::invalid_argument("slowdown: waiting time must be >= 0");
    return 1.0 + static_cast<double>(waiting) / static_cast<double>(execution);
}

/// Minutes between submission and completion not spent doing retained work.
/// Queueing, re-queueing, grace-period drains, and (with rewinding) discarded
/// progress all count as waiting.
[[nodiscard]] inline Minute waiting_time(const JobRecord& r)
{
    if (!r.finish) throw std::logic_error("waiting_time: job " + std::to_string(r.id) + " has not finished");
    return *r.finish - r.submit - r.execution_time();
}

[[nodiscard]] inline double slowdown(const JobRecord& r)
{
    return slowdown(waiting_time(r), r.execution_time());
}

/// Nearest-rank percentile, p in (0, 100].
[[nodiscard]] inline double percentile(std::vector<double> values, double p)
{
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (!(p > 0.0 && p <= 100.0)) throw std::invalid_argument("percentile: p must lie in (0, 100]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

inline constexpr std::array<double, 3> kSlowdownPercentiles{50.0, 95.0, 99.0};
inline constexpr std::array<double, 4> kIntervalPercentiles{50.0, 75.0, 95.0, 99.0};

/// Slowdown percentiles per class; a class with no finished jobs is empty.
struct PercentileTable {
    std::optional<std::array<double, 3>> te;
    std::optional<std::array<double, 3>> be;

    friend bool operator==(const PercentileTable&, const PercentileTable&) = default;
};

[[nodiscard]] inline std::vector<double> slowdowns(const SimulationResult& result, JobClass cls)
{
    std::vector<double> out;
    for (const auto& r : result.jobs) {
        if (r.job_class == cls && r.finished()) out.push_back(slowdown(r));
    }
    return out;
}

[[nodiscard]] inline PercentileTable percentile_table(const SimulationResult& result)
{
    PercentileTable t;
    for (auto cls : {JobClass::TE, JobClass::BE}) {
        const auto values = slowdowns(result, cls);
        if (values.empty()) continue;
        std::array<double, 3> row{};
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = percentile(values, kSlowdownPercentiles[i]);
        (cls == JobClass::TE ? t.te : t.be) = row;
    }
    return t;
}

/// resume - suspend for every completed preemption, in job order.
[[nodiscard]] inline std::vector<Minute> rescheduling_intervals(const SimulationResult& result)
{
    std::vector<Minute> out;
    for (const auto& r : result.jobs) {
        for (const auto& iv : r.intervals) {
            if (iv.resume) out.push_back(*iv.resume - iv.suspend);
        }
    }
    return out;
}

/// Fractions of all jobs preempted exactly once, twice, three or more times,
/// and at least once.
struct PreemptionHistogram {
    std::size_t total_jobs = 0;
    double once = 0.0;
    double twice = 0.0;
    double three_plus = 0.0;
    double at_least_once = 0.0;

    friend bool operator==(const PreemptionHistogram&, const PreemptionHistogram&) = default;
};

[[nodiscard]] inline PreemptionHistogram preemption_stats(const SimulationResult& result)
{
    PreemptionHistogram h;
    h.total_jobs = result.jobs.size();
    if (h.total_jobs == 0) return h;
    std::array<std::size_t, 3> counts{};
    for (const auto& r : result.jobs) {
        if (r.preemption_count >= 1) ++counts[static_cast<std::size_t>(std::min(r.preemption_count, 3) - 1)];
    }
    const auto n = static_cast<double>(h.total_jobs);
    h.once = static_cast<double>(counts[0]) / n;
    h.twice = static_cast<double>(counts[1]) / n;
    h.three_plus = static_cast<double>(counts[2]) / n;
    h.at_least_once = static_cast<double>(counts[0] + counts[1] + counts[2]) / n;
    return h;
}

/// Everything the comparison report needs from one run.
struct RunSummary {
    std::string label;
    PolicyConfig policy;
    std::uint64_t workload_digest = 0;
    bool truncated = false;
    std::size_t total_jobs = 0;
    std::size_t unfinished_jobs = 0;
    PercentileTable slowdown;
    std::optional<std::array<double, 4>> intervals;
    std::size_t interval_count = 0;
    PreemptionHistogram preemptions;
};

[[nodiscard]] inline RunSummary summarize(const SimulationResult& result, std::string label)
{
    RunSummary s;
    s.label = std::move(label);
    s.policy = result.policy;
    s.workload_digest = result.workload_digest;
    s.truncated = result.truncated;
    s.total_jobs = result.jobs.size();
    s.unfinished_jobs = static_cast<std::size_t>(
        std::count_if(result.jobs.begin(), result.jobs.end(), [](const JobRecord& r) { return !r.finished(); }));
    s.slowdown = percentile_table(result);
    const auto iv = rescheduling_intervals(result);
    s.interval_count = iv.size();
    if (!iv.empty()) {
        const std::vector<double> values(iv.begin(), iv.end());
        std::array<double, 4> row{};
        for (std::size_t i = 0; i < row.size(); ++i) row[i] = percentile(values, kIntervalPercentiles[i]);
        s.intervals = row;
    }
    s.preemptions = preemption_stats(result);
    return s;
}

/// One report line: the mean over every run sharing a label (e.g. RAND seeds).
struct ReportRow {
    std::string label;
    PolicyConfig policy;
    std::size_t runs = 0;
    std::size_t unfinished_jobs = 0;
    PercentileTable slowdown;
    std::optional<std::array<double, 4>> intervals;
    PreemptionHistogram preemptions;
    /// Relative changes against the FIFO row, e.g. 0.966 = 96.6% lower.
    std::optional<double> te_p95_reduction_vs_fifo;
    std::optional<double> be_p50_increase_vs_fifo;
    std::optional<double> be_p95_increase_vs_fifo;
};

struct Report {
    bool cross_workload = false;
    std::vector<ReportRow> rows;

    [[nodiscard]] const ReportRow* find(const std::string& label) const
    {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.label == label; });
        return it == rows.end() ? nullptr : &*it;
    }
};

namespace detail {

template <std::size_t N>
std::optional<std::array<double, N>> mean_rows(const std::vector<std::array<double, N>>& rows)
{
    if (rows.empty()) return std::nullopt;
    std::array<double, N> acc{};
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < N; ++i) acc[i] += r[i];
    }
    for (auto& v : acc) v /= static_cast<double>(rows.size());
    return acc;
}

} // namespace detail

/// Groups summaries by label (first-seen order), averages each group, and
/// adds relative-change columns against the first FIFO row when present.
[[nodiscard]] inline Report compare_report(std::span<const RunSummary> runs, bool cross_workload = false)
{
    if (!cross_workload && !runs.empty()) {
        for (const auto& r : runs) {
            if (r.workload_digest != runs.front().workload_digest) {
                throw std::invalid_argument("compare_report: runs '" + runs.front().label + "' and '" + r.label +
                                            "' used different workloads");
            }
        }
    }

    Report report;
    report.cross_workload = cross_workload;
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunSummary*>> groups;
    for (const auto& r : runs) {
        if (!groups.contains(r.label)) order.push_back(r.label);
        groups[r.label].push_back(&r);
    }

    for (const auto& label : order) {
        const auto& members = groups[label];
        ReportRow row;
        row.label = label;
        row.policy = members.front()->policy;
        row.runs = members.size();
        std::vector<std::array<double, 3>> te, be;
        std::vector<std::array<double, 4>> iv;
        for (const auto* m : members) {
            row.unfinished_jobs += m->unfinished_jobs;
            if (m->slowdown.te) te.push_back(*m->slowdown.te);
            if (m->slowdown.be) be.push_back(*m->slowdown.be);
            if (m->intervals) iv.push_back(*m->intervals);
            row.preemptions.total_jobs += m->preemptions.total_jobs;
            row.preemptions.once += m->preemptions.once;
            row.preemptions.twice += m->preemptions.twice;
            row.preemptions.three_plus += m->preemptions.three_plus;
            row.preemptions.at_least_once += m->preemptions.at_least_once;
        }
        const auto n = static_cast<double>(members.size());
        row.preemptions.total_jobs /= members.size();
        row.preemptions.once /= n;
        row.preemptions.twice /= n;
        row.preemptions.three_plus /= n;
        row.preemptions.at_least_once /= n;
        row.slowdown.te = detail::mean_rows(te);
        row.slowdown.be = detail::mean_rows(be);
        row.intervals = detail::mean_rows(iv);
        report.rows.push_back(std::move(row));
    }

    const auto fifo = std::find_if(report.rows.begin(), report.rows.end(),
                                   [](const ReportRow& r) { return r.policy.kind == PolicyKind::FIFO; });
    if (fifo != report.rows.end()) {
        const auto base = fifo->slowdown;
        for (auto& row : report.rows) {
            if (base.te && row.slowdown.te) {
                row.te_p95_reduction_vs_fifo = 1.0 - (*row.slowdown.te)[1] / (*base.te)[1];
            }
            if (base.be && row.slowdown.be) {
                row.be_p50_increase_vs_fifo = (*row.slowdown.be)[0] / (*base.be)[0] - 1.0;
                row.be_p95_increase_vs_fifo = (*row.slowdown.be)[1] / (*base.be)[1] - 1.0;
            }
        }
    }
    return report;
}

} // namespace fitgpp
