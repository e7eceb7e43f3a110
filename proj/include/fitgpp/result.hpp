#pragma once

#include "fitgpp/domain.hpp"
#include "fitgpp/policies.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fitgpp {

enum class EventKind : std::uint8_t { Submit, Start, SuspendSignal, Requeue, Resume, Finish };

[[nodiscard]] inline std::string_view to_string(EventKind k)
{
    switch (k) {
    case EventKind::Submit: return "submit";
    case EventKind::Start: return "start";
    case EventKind::SuspendSignal: return "suspend_signal";
    case EventKind::Requeue: return "requeue";
    case EventKind::Resume: return "resume";
    case EventKind::Finish: return "finish";
    }
    return "?";
}

[[nodiscard]] inline std::optional<EventKind> parse_event_kind(std::string_view s)
{
    for (auto k : {EventKind::Submit, EventKind::Start, EventKind::SuspendSignal, EventKind::Requeue,
                   EventKind::Resume, EventKind::Finish}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

struct Event {
    Minute minute = 0;
    JobId job = 0;
    EventKind kind = EventKind::Submit;
    std::optional<NodeId> node;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Outcome of one job. Execution time is the job's duration: only Running
/// minutes that are retained count as execution.
struct JobRecord {
    JobId id = 0;
    JobClass job_class = JobClass::BE;
    Demand demand;
    Minute duration = 1;
    Minute grace_period = 0;
    Minute submit = 0;
    std::optional<Minute> first_start;
    std::optional<Minute> finish;
    Minute running_minutes = 0;
    Minute draining_minutes = 0;
    int preemption_count = 0;
    std::vector<PreemptionInterval> intervals;

    [[nodiscard]] bool finished() const { return finish.has_value(); }
    [[nodiscard]] Minute execution_time() const { return duration; }

    friend bool operator==(const JobRecord&, const JobRecord&) = default;
};

struct SimulationResult {
    PolicyConfig policy;
    std::uint64_t workload_digest = 0;
    bool truncated = false;
    Minute end_minute = 0;
    /// Preemption plans initiated, and how many of them were random fallbacks.
    std::size_t plans = 0;
    std::size_t fallback_plans = 0;
    std::vector<JobRecord> jobs;
    std::vector<Event> events;

    friend bool operator==(const SimulationResult&, const SimulationResult&) = default;
};

/// FNV-1a over every field of every job, in order.
[[nodiscard]] inline std::uint64_t workload_digest(std::span<const Job> jobs)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& j : jobs) {
        mix(static_cast<std::uint64_t>(j.id));
        mix(static_cast<std::uint64_t>(j.job_class));
        mix(static_cast<std::uint64_t>(j.demand.cpu));
        // RAM is stored with 0.1 GB granularity; hash tenths of a GB.
        mix(static_cast<std::uint64_t>(std::llround(j.demand.ram * 10.0)));
        mix(static_cast<std::uint64_t>(j.demand.gpu));
        mix(static_cast<std::uint64_t>(j.duration));
        mix(static_cast<std::uint64_t>(j.grace_period));
        mix(static_cast<std::uint64_t>(j.submit_time));
    }
    return h;
}

} // namespace fitgpp
