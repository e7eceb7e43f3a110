#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fitgpp {

using Minute = std::int64_t;
using JobId = std::int64_t;
using NodeId = std::int32_t;

/// Resource vector over the three schedulable resources. CPU and GPU are
/// whole devices; RAM is in GB.
struct Demand {
    std::int64_t cpu = 0;
    double ram = 0.0;
    std::int64_t gpu = 0;

    friend bool operator==(const Demand&, const Demand&) = default;

    Demand& operator+=(const Demand& o)
    {
        cpu += o.cpu;
        ram += o.ram;
        gpu += o.gpu;
        return *this;
    }
    Demand& operator-=(const Demand& o)
    {
        cpu -= o.cpu;
        ram -= o.ram;
        gpu -= o.gpu;
        return *this;
    }
    friend Demand operator+(Demand a, const Demand& b) { return a += b; }
    friend Demand operator-(Demand a, const Demand& b) { return a -= b; }

    [[nodiscard]] bool is_zero() const { return cpu == 0 && ram == 0.0 && gpu == 0; }
    [[nodiscard]] bool non_negative() const { return cpu >= 0 && ram >= 0.0 && gpu >= 0; }
};

/// Tolerance for RAM comparisons; RAM is accumulated as a double.
inline constexpr double kRamEpsilon = 1e-9;

/// Element-wise a <= b.
[[nodiscard]] inline bool demand_le(const Demand& a, const Demand& b)
{
    return a.cpu <= b.cpu && a.ram <= b.ram + kRamEpsilon && a.gpu <= b.gpu;
}

[[nodiscard]] inline Demand elementwise_min(const Demand& a, const Demand& b)
{
    return {std::min(a.cpu, b.cpu), std::min(a.ram, b.ram), std::min(a.gpu, b.gpu)};
}

/// Component-wise max(a - b, 0).
[[nodiscard]] inline Demand shortfall(const Demand& need, const Demand& have)
{
    return {std::max<std::int64_t>(need.cpu - have.cpu, 0),
            need.ram - have.ram > kRamEpsilon ? need.ram - have.ram : 0.0,
            std::max<std::int64_t>(need.gpu - have.gpu, 0)};
}

/// Per-node capacity. Every component is strictly positive.
class Capacity {
public:
    Capacity(std::int64_t cpu, double ram, std::int64_t gpu) : value_{cpu, ram, gpu}
    {
        if (cpu <= 0 || !(ram > 0.0) || gpu <= 0) {
            throw std::invalid_argument("capacity components must be strictly positive");
        }
    }

    [[nodiscard]] std::int64_t cpu() const { return value_.cpu; }
    [[nodiscard]] double ram() const { return value_.ram; }
    [[nodiscard]] std::int64_t gpu() const { return value_.gpu; }
    [[nodiscard]] const Demand& as_demand() const { return value_; }

    friend bool operator==(const Capacity&, const Capacity&) = default;

private:
    Demand value_;
};

/// Euclidean norm of the capacity-normalised demand vector.
[[nodiscard]] inline double size(const Demand& d, const Capacity& cap)
{
    const double c = static_cast<double>(d.cpu) / static_cast<double>(cap.cpu());
    const double r = d.ram / cap.ram();
    const double g = static_cast<double>(d.gpu) / static_cast<double>(cap.gpu());
    return std::sqrt(c * c + r * r + g * g);
}

/// True iff preempting a job holding `be` on a node with `free` unallocated
/// resources leaves enough room for `te`.
[[nodiscard]] inline bool fits(const Demand& te, const Demand& be, const Demand& free)
{
    return demand_le(te, be + free);
}

enum class JobClass : std::uint8_t { TE, BE };

[[nodiscard]] inline std::string_view to_string(JobClass c)
{
    return c == JobClass::TE ? "TE" : "BE";
}

[[nodiscard]] inline std::optional<JobClass> parse_job_class(std::string_view s)
{
    if (s == "TE") return JobClass::TE;
    if (s == "BE") return JobClass::BE;
    return std::nullopt;
}

struct Job {
    JobId id = 0;
    JobClass job_class = JobClass::BE;
    Demand demand;
    Minute duration = 1;
    Minute grace_period = 0;
    Minute submit_time = 0;

    friend bool operator==(const Job&, const Job&) = default;
};

/// Throws std::invalid_argument when a job violates its value invariants.
inline void validate(const Job& job)
{
    if (job.duration < 1) {
        throw std::invalid_argument("job " + std::to_string(job.id) + ": duration must be >= 1");
    }
    if (job.grace_period < 0) {
        throw std::invalid_argument("job " + std::to_string(job.id) + ": grace period must be >= 0");
    }
    if (job.submit_time < 0) {
        throw std::invalid_argument("job " + std::to_string(job.id) + ": submit time must be >= 0");
    }
    if (!job.demand.non_negative() || job.demand.is_zero()) {
        throw std::invalid_argument("job " + std::to_string(job.id) +
                                    ": demand must be non-negative and not all zero");
    }
}

enum class JobState : std::uint8_t { Queued, Running, Draining, Suspended, Finished };

[[nodiscard]] inline std::string_view to_string(JobState s)
{
    switch (s) {
    case JobState::Queued: return "Queued";
    case JobState::Running: return "Running";
    case JobState::Draining: return "Draining";
    case JobState::Suspended: return "Suspended";
    case JobState::Finished: return "Finished";
    }
    return "?";
}

/// A (suspend-signal minute, resume minute) pair. `resume` is empty while the
/// job has not been restarted yet.
struct PreemptionInterval {
    Minute suspend = 0;
    std::optional<Minute> resume;

    friend bool operator==(const PreemptionInterval&, const PreemptionInterval&) = default;
};

/// Mutable scheduling state of one job inside a simulation.
struct JobRuntime {
    Job job;
    JobState state = JobState::Queued;
    Minute remaining = 0;
    int preemption_count = 0;
    std::optional<NodeId> node;
    std::optional<Minute> drain_deadline;
    std::optional<Minute> first_start;
    std::optional<Minute> finish_time;
    std::vector<PreemptionInterval> interval_log;
    Minute running_minutes = 0;
    Minute draining_minutes = 0;

    explicit JobRuntime(Job j) : job(std::move(j)), remaining(job.duration) {}
};

/// Checks a state change against the job lifecycle. Suspended jobs return to
/// the queue before running again.
[[nodiscard]] inline bool is_valid_transition(JobState from, JobState to)
{
    switch (from) {
    case JobState::Queued: return to == JobState::Running;
    case JobState::Running: return to == JobState::Draining || to == JobState::Finished;
    case JobState::Draining: return to == JobState::Suspended;
    case JobState::Suspended: return to == JobState::Queued;
    case JobState::Finished: return false;
    }
    return false;
}

inline void transition(JobRuntime& rt, JobState to)
{
    if (!is_valid_transition(rt.state, to)) {
        throw std::logic_error("job " + std::to_string(rt.job.id) + ": illegal transition " +
                               std::string(to_string(rt.state)) + " -> " +
                               std::string(to_string(to)));
    }
    rt.state = to;
}

} // namespace fitgpp
