#pragma once

#include "fitgpp/domain.hpp"
#include "fitgpp/engine.hpp"
#include "fitgpp/policies.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace fitgpp {

/// Normal(mean, stddev) conditioned on [lower, upper].
struct TruncNormalSpec {
    double mean = 0.0;
    double stddev = 1.0;
    double lower = 0.0;
    double upper = 1.0;

    friend bool operator==(const TruncNormalSpec&, const TruncNormalSpec&) = default;

    [[nodiscard]] TruncNormalSpec scaled(double k) const
    {
        return {mean * k, stddev * k, lower * k, upper * k};
    }
};

namespace detail {

inline double std_normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

inline double std_normal_pdf(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Pr[X <= x] for the truncated distribution.
inline double trunc_normal_cdf(const TruncNormalSpec& spec, double x)
{
    if (x <= spec.lower) return 0.0;
    if (x >= spec.upper) return 1.0;
    const double a = std_normal_cdf((spec.lower - spec.mean) / spec.stddev);
    const double b = std_normal_cdf((spec.upper - spec.mean) / spec.stddev);
    const double v = std_normal_cdf((x - spec.mean) / spec.stddev);
    return (v - a) / (b - a);
}

} // namespace detail

/// Probability mass of the untruncated normal inside [lower, upper].
[[nodiscard]] inline double acceptance_probability(const TruncNormalSpec& spec)
{
    return detail::std_normal_cdf((spec.upper - spec.mean) / spec.stddev) -
           detail::std_normal_cdf((spec.lower - spec.mean) / spec.stddev);
}

inline void validate(const TruncNormalSpec& spec)
{
    if (!(spec.stddev > 0.0)) throw std::invalid_argument("truncated normal: stddev must be > 0");
    if (!(spec.lower < spec.upper)) throw std::invalid_argument("truncated normal: lower must be < upper");
    const double p = acceptance_probability(spec);
    if (!(p >= 1e-6)) {
        std::ostringstream msg;
        msg << "truncated normal: acceptance probability " << p << " below 1e-6 (mean=" << spec.mean
            << ", stddev=" << spec.stddev << ", bounds=[" << spec.lower << ", " << spec.upper << "])";
        throw std::invalid_argument(msg.str());
    }
}

/// Closed-form mean of the truncated normal.
[[nodiscard]] inline double truncated_mean(const TruncNormalSpec& spec)
{
    const double alpha = (spec.lower - spec.mean) / spec.stddev;
    const double beta = (spec.upper - spec.mean) / spec.stddev;
    const double z = detail::std_normal_cdf(beta) - detail::std_normal_cdf(alpha);
    return spec.mean +
           spec.stddev * (detail::std_normal_pdf(alpha) - detail::std_normal_pdf(beta)) / z;
}

/// Exact expectation of clamp(round(X), lo, hi) for X from `spec`, where round
/// is half-away-from-zero as in std::llround.
[[nodiscard]] inline double expected_rounded(const TruncNormalSpec& spec, std::int64_t lo,
                                             std::int64_t hi)
{
    const auto first = static_cast<std::int64_t>(std::llround(spec.lower));
    const auto last = static_cast<std::int64_t>(std::llround(spec.upper));
    double e = 0.0;
    for (std::int64_t k = first; k <= last; ++k) {
        const double p = detail::trunc_normal_cdf(spec, static_cast<double>(k) + 0.5) -
                         detail::trunc_normal_cdf(spec, static_cast<double>(k) - 0.5);
        e += p * static_cast<double>(std::clamp(k, lo, hi));
    }
    return e;
}

/// Rejection sampler; the spec must already be valid.
[[nodiscard]] inline double sample_trunc_normal(const TruncNormalSpec& spec, Rng& rng)
{
    validate(spec);
    std::normal_distribution<double> normal(spec.mean, spec.stddev);
    for (;;) {
        const double x = normal(rng);
        if (x >= spec.lower && x <= spec.upper) return x;
    }
}

/// Distribution of one job class.
struct ClassSpec {
    TruncNormalSpec duration; // minutes
    TruncNormalSpec cpu;      // CPUs
    TruncNormalSpec ram;      // GB
    TruncNormalSpec gpu;      // GPUs

    friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

/// Demand means and spreads are not published for the reference workload;
/// these defaults (sd = mean for durations, sd = mean/2 for demands) are
/// assumptions and are all overridable from the experiment config.
[[nodiscard]] inline ClassSpec default_te_spec()
{
    return {{5.0, 5.0, 3.0, 30.0}, {6.0, 3.0, 1.0, 32.0}, {48.0, 24.0, 0.0, 256.0}, {3.0, 1.5, 0.0, 8.0}};
}

[[nodiscard]] inline ClassSpec default_be_spec()
{
    return {{30.0, 30.0, 3.0, 1440.0}, {8.0, 4.0, 1.0, 32.0}, {64.0, 32.0, 0.0, 256.0}, {2.0, 1.0, 0.0, 8.0}};
}

/// How `target_load` is interpreted when choosing the arrival rate.
enum class LoadModel : std::uint8_t {
    /// Open loop: expected GPU-minutes submitted per minute over cluster GPUs.
    Offered,
    /// Closed loop: time-averaged GPU demand of every job in the system
    /// (running or waiting) over cluster GPUs, when the workload is run under
    /// FIFO. The arrival rate is found by bisection.
    FifoInSystem,
};

[[nodiscard]] inline std::string_view to_string(LoadModel m)
{
    return m == LoadModel::Offered ? "offered" : "fifo_in_system";
}

[[nodiscard]] inline std::optional<LoadModel> parse_load_model(std::string_view s)
{
    if (s == "offered") return LoadModel::Offered;
    if (s == "fifo_in_system") return LoadModel::FifoInSystem;
    return std::nullopt;
}

struct WorkloadSpec {
    std::size_t total_jobs = std::size_t{1} << 16;
    double te_fraction = 0.30;
    ClassSpec te = default_te_spec();
    ClassSpec be = default_be_spec();
    /// Grace periods in minutes, before scaling.
    TruncNormalSpec gp{3.0, 3.0, 0.0, 20.0};
    /// Multiplies mean, stddev, and both bounds of the GP distribution.
    double gp_scale = 1.0;
    double target_load = 2.0;
    LoadModel load_model = LoadModel::FifoInSystem;
    std::size_t node_count = 84;
    Capacity node_capacity{32, 256.0, 8};
    std::uint64_t seed = 1;

    void validate() const
    {
        if (total_jobs == 0) throw std::invalid_argument("workload: total_jobs must be positive");
        if (!(te_fraction >= 0.0 && te_fraction <= 1.0)) {
            throw std::invalid_argument("workload: te_fraction must lie in [0, 1]");
        }
        if (!(gp_scale > 0.0)) throw std::invalid_argument("workload: gp_scale must be > 0");
        if (!(target_load > 0.0)) throw std::invalid_argument("workload: target_load must be > 0");
        if (node_count == 0) throw std::invalid_argument("workload: node_count must be positive");
        for (const ClassSpec* c : {&te, &be}) {
            fitgpp::validate(c->duration);
            fitgpp::validate(c->cpu);
            fitgpp::validate(c->ram);
            fitgpp::validate(c->gpu);
        }
        fitgpp::validate(gp_spec());
    }

    [[nodiscard]] TruncNormalSpec gp_spec() const { return gp.scaled(gp_scale); }
};

/// SplitMix64 finaliser; used to derive independent RNG streams from a seed.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kArrivalStream = 0xa55a'a55a'a55a'a55aULL;

[[nodiscard]] inline double round_to_tenth(double x)
{
    return std::round(x * 10.0) / 10.0;
}

/// Expected GPU-minutes per job, from the closed-form moments of the
/// (rounded, clamped) class distributions.
[[nodiscard]] inline double expected_gpu_minutes(const WorkloadSpec& spec)
{
    const auto gpu_cap = spec.node_capacity.gpu();
    auto per_class = [&](const ClassSpec& c) {
        const double d = expected_rounded(c.duration, 1, std::numeric_limits<std::int64_t>::max());
        const double g = expected_rounded(c.gpu, 0, gpu_cap);
        return d * g;
    };
    return spec.te_fraction * per_class(spec.te) + (1.0 - spec.te_fraction) * per_class(spec.be);
}

/// Poisson arrival rate (jobs per minute) that offers `target_load` times the
/// cluster's GPU capacity, open loop.
[[nodiscard]] inline double arrival_rate(const WorkloadSpec& spec)
{
    const double gpu_total =
        static_cast<double>(spec.node_count) * static_cast<double>(spec.node_capacity.gpu());
    const double per_job = expected_gpu_minutes(spec);
    if (!(per_job > 0.0)) throw std::invalid_argument("workload: expected GPU demand is zero");
    return spec.target_load * gpu_total / per_job;
}

/// Draws one job's attributes from the per-job stream. Submit time is filled
/// in by the caller.
[[nodiscard]] inline Job draw_job(const WorkloadSpec& spec, std::size_t index)
{
    Rng rng(mix_seed(spec.seed, index));
    std::bernoulli_distribution is_te(spec.te_fraction);
    const bool te = is_te(rng);
    const ClassSpec& c = te ? spec.te : spec.be;
    const auto& cap = spec.node_capacity;

    Job job;
    job.id = static_cast<JobId>(index);
    job.job_class = te ? JobClass::TE : JobClass::BE;
    job.duration = std::max<Minute>(1, std::llround(sample_trunc_normal(c.duration, rng)));
    job.demand.cpu = std::clamp<std::int64_t>(std::llround(sample_trunc_normal(c.cpu, rng)), 1, cap.cpu());
    job.demand.ram = std::clamp(round_to_tenth(sample_trunc_normal(c.ram, rng)), 0.0, cap.ram());
    job.demand.gpu = std::clamp<std::int64_t>(std::llround(sample_trunc_normal(c.gpu, rng)), 0, cap.gpu());
    job.grace_period = std::max<Minute>(0, std::llround(sample_trunc_normal(spec.gp_spec(), rng)));
    return job;
}

/// Synthesises a workload at a fixed Poisson rate. Per-job attributes come
/// from independent streams and inter-arrival gaps from one unit-rate stream
/// scaled by 1/lambda, so changing lambda only rescales submit times.
[[nodiscard]] inline std::vector<Job> generate_at_rate(const WorkloadSpec& spec, double lambda)
{
    spec.validate();
    if (!(lambda > 0.0)) throw std::invalid_argument("workload: arrival rate must be > 0");
    Rng arrival_rng(mix_seed(spec.seed, kArrivalStream));
    std::exponential_distribution<double> gap(1.0);

    std::vector<Job> jobs;
    jobs.reserve(spec.total_jobs);
    double clock = 0.0;
    for (std::size_t i = 0; i < spec.total_jobs; ++i) {
        Job job = draw_job(spec, i);
        if (!demand_le(job.demand, spec.node_capacity.as_demand())) {
            throw std::logic_error("generated demand exceeds node capacity");
        }
        job.submit_time = static_cast<Minute>(std::floor(clock));
        jobs.push_back(job);
        clock += gap(arrival_rng) / lambda;
    }
    return jobs;
}

/// Time-averaged GPU demand of the jobs present in the system (submitted and
/// not yet finished), over cluster GPU capacity, across the submission window.
[[nodiscard]] inline double in_system_load(const SimulationResult& result, std::size_t node_count,
                                           const Capacity& cap)
{
    if (result.jobs.empty()) throw std::invalid_argument("in_system_load: empty result");
    Minute first = std::numeric_limits<Minute>::max();
    Minute last = std::numeric_limits<Minute>::min();
    for (const auto& r : result.jobs) {
        first = std::min(first, r.submit);
        last = std::max(last, r.submit);
    }
    if (last <= first) throw std::invalid_argument("in_system_load: submissions span zero minutes");
    double gpu_minutes = 0.0;
    for (const auto& r : result.jobs) {
        const Minute leave = r.finish.value_or(std::numeric_limits<Minute>::max());
        const Minute overlap = std::min(leave, last) - std::max(r.submit, first);
        if (overlap > 0) gpu_minutes += static_cast<double>(r.demand.gpu) * static_cast<double>(overlap);
    }
    const double capacity = static_cast<double>(node_count) * static_cast<double>(cap.gpu());
    return gpu_minutes / (capacity * static_cast<double>(last - first));
}

[[nodiscard]] inline double fifo_in_system_load(std::span<const Job> jobs, std::size_t node_count,
                                                const Capacity& cap)
{
    SimConfig cfg;
    cfg.node_count = node_count;
    cfg.node_capacity = cap;
    cfg.policy.kind = PolicyKind::FIFO;
    return in_system_load(run(jobs, cfg), node_count, cap);
}

struct RateCalibration {
    double lambda = 0.0;
    double achieved_load = 0.0;
    int iterations = 0;
};

/// Bisects (in log space) for the arrival rate whose FIFO in-system load
/// matches `spec.target_load` to within `rel_tol`.
[[nodiscard]] inline RateCalibration calibrate_arrival_rate(const WorkloadSpec& spec, double rel_tol = 0.01,
                                                            int max_iterations = 30)
{
    spec.validate();
    auto measure = [&](double lambda) {
        return fifo_in_system_load(generate_at_rate(spec, lambda), spec.node_count, spec.node_capacity);
    };

    RateCalibration best;
    auto consider = [&](double lambda, double load) {
        if (best.iterations == 0 ||
            std::abs(load - spec.target_load) < std::abs(best.achieved_load - spec.target_load)) {
            best.lambda = lambda;
            best.achieved_load = load;
        }
        ++best.iterations;
        return std::abs(load - spec.target_load) <= rel_tol * spec.target_load;
    };

    // The open-loop rate for the same target is an upper bracket in practice
    // (queueing only adds in-system demand); widen if it is not.
    double hi = arrival_rate(spec);
    double hi_load = measure(hi);
    if (consider(hi, hi_load)) return best;
    while (hi_load < spec.target_load && best.iterations < max_iterations) {
        hi *= 2.0;
        hi_load = measure(hi);
        if (consider(hi, hi_load)) return best;
    }
    double lo = hi / 2.0;
    double lo_load = measure(lo);
    if (consider(lo, lo_load)) return best;
    while (lo_load > spec.target_load && best.iterations < max_iterations) {
        lo /= 2.0;
        lo_load = measure(lo);
        if (consider(lo, lo_load)) return best;
    }
    // Near saturation the load is steep and jittery in lambda; stop once the
    // bracket is tighter than anything that matters for submit times.
    while (best.iterations < max_iterations && hi / lo > 1.0 + 1e-4) {
        const double mid = std::sqrt(lo * hi);
        const double load = measure(mid);
        if (consider(mid, load)) return best;
        (load < spec.target_load ? lo : hi) = mid;
    }
    return best;
}

/// The arrival rate `generate` uses for `spec`.
[[nodiscard]] inline double resolve_arrival_rate(const WorkloadSpec& spec)
{
    return spec.load_model == LoadModel::Offered ? arrival_rate(spec) : calibrate_arrival_rate(spec).lambda;
}

/// Synthesises the workload described by `spec`, sorted by submit time with
/// ids in order.
[[nodiscard]] inline std::vector<Job> generate(const WorkloadSpec& spec)
{
    return generate_at_rate(spec, resolve_arrival_rate(spec));
}

/// Time-averaged fraction of cluster GPU capacity demanded over the
/// submission window.
[[nodiscard]] inline double offered_load(std::span<const Job> jobs, std::size_t node_count,
                                         const Capacity& cap)
{
    if (jobs.empty()) throw std::invalid_argument("offered_load: empty workload");
    Minute first = std::numeric_limits<Minute>::max();
    Minute last = std::numeric_limits<Minute>::min();
    double gpu_minutes = 0.0;
    for (const auto& j : jobs) {
        first = std::min(first, j.submit_time);
        last = std::max(last, j.submit_time);
        gpu_minutes += static_cast<double>(j.demand.gpu) * static_cast<double>(j.duration);
    }
    if (last <= first) throw std::invalid_argument("offered_load: submissions span zero minutes");
    const double capacity = static_cast<double>(node_count) * static_cast<double>(cap.gpu());
    return gpu_minutes / (capacity * static_cast<double>(last - first));
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTraceHeader = "id,submit_min,duration_min,cpu,ram_gb,gpu,class,gp_min";

class TraceParseError : public std::runtime_error {
public:
    TraceParseError(std::size_t line, std::string field, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", field '" + field + "': " + what),
          line_(line),
          field_(std::move(field))
    {
    }

    [[nodiscard]] std::size_t line() const { return line_; }
    [[nodiscard]] const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

namespace detail {

inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

template <typename T>
T parse_field(std::string_view text, std::size_t line, const char* field)
{
    T value{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw TraceParseError(line, field, "cannot parse '" + std::string(text) + "'");
    }
    return value;
}

inline std::vector<std::string_view> split_csv(std::string_view row)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = row.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(row.substr(start));
            return out;
        }
        out.push_back(row.substr(start, comma - start));
        start = comma + 1;
    }
}

} // namespace detail

/// Writes jobs in the trace format. A job's GP is always written.
inline void write_trace(std::ostream& out, std::span<const Job> jobs)
{
    out << kTraceHeader << '\n';
    for (const auto& j : jobs) {
        out << j.id << ',' << j.submit_time << ',' << j.duration << ',' << j.demand.cpu << ','
            << detail::format_double(j.demand.ram) << ',' << j.demand.gpu << ','
            << to_string(j.job_class) << ',' << j.grace_period << '\n';
    }
}

/// How to fill grace periods missing from a trace.
struct GpSynthesis {
    TruncNormalSpec gp{3.0, 3.0, 0.0, 20.0};
    std::uint64_t seed = 1;
};

/// Parses a trace. Missing `gp_min` values are sampled from `synth.gp` with a
/// stream derived from (seed, job id). Output is sorted by submit time.
[[nodiscard]] inline std::vector<Job> read_trace(std::istream& in, const GpSynthesis& synth = {})
{
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw TraceParseError(1, "header", "empty trace file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceHeader) {
        throw TraceParseError(1, "header", "expected '" + std::string(kTraceHeader) + "'");
    }

    std::vector<Job> jobs;
    std::unordered_set<JobId> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = detail::split_csv(line);
        if (cols.size() != 8) {
            throw TraceParseError(line_no, "row", "expected 8 columns, found " + std::to_string(cols.size()));
        }
        Job job;
        job.id = detail::parse_field<JobId>(cols[0], line_no, "id");
        job.submit_time = detail::parse_field<Minute>(cols[1], line_no, "submit_min");
        job.duration = detail::parse_field<Minute>(cols[2], line_no, "duration_min");
        job.demand.cpu = detail::parse_field<std::int64_t>(cols[3], line_no, "cpu");
        job.demand.ram = detail::parse_field<double>(cols[4], line_no, "ram_gb");
        job.demand.gpu = detail::parse_field<std::int64_t>(cols[5], line_no, "gpu");
        const auto cls = parse_job_class(cols[6]);
        if (!cls) throw TraceParseError(line_no, "class", "expected TE or BE, found '" + std::string(cols[6]) + "'");
        job.job_class = *cls;
        if (cols[7].empty()) {
            validate(synth.gp);
            Rng rng(mix_seed(synth.seed, static_cast<std::uint64_t>(job.id)));
            job.grace_period = std::max<Minute>(0, std::llround(sample_trunc_normal(synth.gp, rng)));
        } else {
            job.grace_period = detail::parse_field<Minute>(cols[7], line_no, "gp_min");
        }

        if (job.duration < 1) throw TraceParseError(line_no, "duration_min", "duration must be >= 1");
        if (job.submit_time < 0) throw TraceParseError(line_no, "submit_min", "must be >= 0");
        if (job.demand.cpu < 0) throw TraceParseError(line_no, "cpu", "must be >= 0");
        if (!(job.demand.ram >= 0.0)) throw TraceParseError(line_no, "ram_gb", "must be >= 0");
        if (job.demand.gpu < 0) throw TraceParseError(line_no, "gpu", "must be >= 0");
        if (job.demand.is_zero()) throw TraceParseError(line_no, "cpu", "demand is all zero");
        if (job.grace_period < 0) throw TraceParseError(line_no, "gp_min", "must be >= 0");
        if (!seen.insert(job.id).second) throw TraceParseError(line_no, "id", "duplicate job id");
        jobs.push_back(job);
    }
    std::stable_sort(jobs.begin(), jobs.end(),
                     [](const Job& a, const Job& b) { return a.submit_time < b.submit_time; });
    return jobs;
}

[[nodiscard]] inline std::vector<Job> load_trace(const std::string& path, const GpSynthesis& synth = {})
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file '" + path + "'");
    return read_trace(in, synth);
}

} // namespace fitgpp
