#include "fitgpp/workload.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace fitgpp;

namespace {

// Independent oracle: composite Simpson integration of x * phi and phi over
// the truncation interval.
double numeric_trunc_mean(const TruncNormalSpec& s)
{
    const int n = 200000;
    const double h = (s.upper - s.lower) / n;
    auto pdf = [&](double x) {
        const double z = (x - s.mean) / s.stddev;
        return std::exp(-0.5 * z * z);
    };
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = s.lower + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        num += w * x * pdf(x);
        den += w * pdf(x);
    }
    return num / den;
}

WorkloadSpec small_spec()
{
    WorkloadSpec s;
    s.total_jobs = 4000;
    s.node_count = 4;
    s.target_load = 1.0;
    return s;
}

} // namespace

TEST(TruncNormal, ClosedFormMatchesNumericOracle)
{
    for (const TruncNormalSpec& s : {TruncNormalSpec{30, 30, 3, 1440}, TruncNormalSpec{3, 3, 0, 20},
                                     TruncNormalSpec{2, 1, 0, 8}, TruncNormalSpec{-1, 2, 0, 5}}) {
        EXPECT_NEAR(truncated_mean(s), numeric_trunc_mean(s), 1e-6 * std::max(1.0, std::abs(s.mean)));
    }
}

TEST(TruncNormal, SampleMeanWithinOnePercent)
{
    const TruncNormalSpec s{30, 30, 3, 1440};
    const double oracle = numeric_trunc_mean(s);
    Rng rng(7);
    double sum = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double x = sample_trunc_normal(s, rng);
        ASSERT_GE(x, s.lower);
        ASSERT_LE(x, s.upper);
        sum += x;
    }
    EXPECT_NEAR(sum / n, oracle, 0.01 * oracle);
}

TEST(TruncNormal, PathologicalSpecIsRejected)
{
    const TruncNormalSpec s{0, 1, 50, 60};
    try {
        validate(s);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("bounds=[50, 60]"), std::string::npos);
    }
    EXPECT_THROW(validate(TruncNormalSpec{0, 0, 0, 1}), std::invalid_argument);
    EXPECT_THROW(validate(TruncNormalSpec{0, 1, 2, 1}), std::invalid_argument);
}

TEST(TruncNormal, ExpectedRoundedMatchesSampling)
{
    const TruncNormalSpec s{2, 1, 0, 8};
    Rng rng(3);
    double sum = 0.0;
    const int n = 400000;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(std::llround(sample_trunc_normal(s, rng)));
    EXPECT_NEAR(sum / n, expected_rounded(s, 0, 8), 0.01);
}

TEST(Generator, NoTeWhenFractionIsZero)
{
    auto s = small_spec();
    s.te_fraction = 0.0;
    for (const auto& j : generate_at_rate(s, 1.0)) EXPECT_EQ(j.job_class, JobClass::BE);
}

TEST(Generator, TeCountWithinThreeSigma)
{
    auto s = small_spec();
    s.total_jobs = 10000;
    const auto jobs = generate_at_rate(s, 1.0);
    const auto te = std::count_if(jobs.begin(), jobs.end(), [](const Job& j) { return j.job_class == JobClass::TE; });
    const double n = 10000, p = 0.3;
    EXPECT_LE(std::abs(static_cast<double>(te) - n * p), 3.0 * std::sqrt(n * p * (1 - p)));
}

TEST(Generator, ScaledGracePeriodsRespectBounds)
{
    auto s = small_spec();
    s.gp_scale = 2.0;
    for (const auto& j : generate_at_rate(s, 1.0)) {
        EXPECT_GE(j.grace_period, 0);
        EXPECT_LE(j.grace_period, 40);
    }
}

TEST(Generator, DemandsFitANodeAndIdsAreOrdered)
{
    const auto s = small_spec();
    const auto jobs = generate_at_rate(s, 2.0);
    ASSERT_EQ(jobs.size(), s.total_jobs);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        EXPECT_EQ(jobs[i].id, static_cast<JobId>(i));
        EXPECT_TRUE(demand_le(jobs[i].demand, s.node_capacity.as_demand()));
        EXPECT_GE(jobs[i].duration, 1);
        EXPECT_NO_THROW(validate(jobs[i]));
        if (i > 0) {
            EXPECT_LE(jobs[i - 1].submit_time, jobs[i].submit_time);
        }
    }
}

TEST(Generator, RateOnlyRescalesSubmitTimes)
{
    const auto s = small_spec();
    const auto a = generate_at_rate(s, 1.0);
    const auto b = generate_at_rate(s, 3.0);
    EXPECT_EQ(a, generate_at_rate(s, 1.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto x = a[i];
        x.submit_time = b[i].submit_time;
        EXPECT_EQ(x, b[i]);
    }
}

TEST(Generator, ExpectedGpuMinutesMatchesSampling)
{
    auto s = small_spec();
    double sum = 0.0;
    const std::size_t n = 200000;
    for (std::size_t i = 0; i < n; ++i) {
        const Job j = draw_job(s, i);
        sum += static_cast<double>(j.duration * j.demand.gpu);
    }
    const double expected = expected_gpu_minutes(s);
    EXPECT_NEAR(sum / static_cast<double>(n), expected, 0.02 * expected);
}

TEST(OfferedLoad, WholeClusterForTheWindowIsOne)
{
    const Capacity cap{32, 256.0, 8};
    const std::vector<Job> jobs{{0, JobClass::BE, {1, 1, 8}, 10, 0, 0}, {1, JobClass::BE, {1, 1, 8}, 10, 0, 10}};
    EXPECT_DOUBLE_EQ(offered_load(jobs, 2, cap), 1.0);
    auto doubled = jobs;
    for (auto& j : doubled) j.duration *= 2;
    EXPECT_DOUBLE_EQ(offered_load(doubled, 2, cap), 2.0);
    EXPECT_THROW((void)offered_load(std::vector<Job>{}, 2, cap), std::invalid_argument);
}

TEST(OfferedLoad, OfferedModeHitsTarget)
{
    WorkloadSpec s;
    s.load_model = LoadModel::Offered;
    const auto jobs = generate(s);
    const double load = offered_load(jobs, s.node_count, s.node_capacity);
    EXPECT_GE(load, 1.9);
    EXPECT_LE(load, 2.1);
}

TEST(Calibration, MatchesMeasuredFifoLoad)
{
    const auto s = small_spec();
    const auto cal = calibrate_arrival_rate(s);
    EXPECT_GT(cal.lambda, 0.0);
    EXPECT_NEAR(cal.achieved_load, s.target_load, 0.05 * s.target_load);
    const auto jobs = generate_at_rate(s, cal.lambda);
    EXPECT_DOUBLE_EQ(fifo_in_system_load(jobs, s.node_count, s.node_capacity), cal.achieved_load);
    // Queueing only adds in-system demand, so the open-loop rate is an upper bound.
    EXPECT_LE(cal.lambda, arrival_rate(s) * 1.0001);
}

TEST(Trace, RoundTrip)
{
    const auto jobs = generate_at_rate(small_spec(), 1.0);
    std::stringstream buf;
    write_trace(buf, jobs);
    EXPECT_EQ(read_trace(buf), jobs);
}

TEST(Trace, MissingGraceIsSampledDeterministically)
{
    const std::string text = std::string(kTraceHeader) + "\n0,0,5,1,2.5,1,BE,\n1,3,5,1,2.5,1,TE,7\n";
    std::istringstream a(text), b(text);
    const GpSynthesis synth{{3, 3, 0, 20}, 11};
    const auto x = read_trace(a, synth);
    const auto y = read_trace(b, synth);
    EXPECT_EQ(x, y);
    EXPECT_GE(x[0].grace_period, 0);
    EXPECT_LE(x[0].grace_period, 20);
    EXPECT_EQ(x[1].grace_period, 7);
}

TEST(Trace, ZeroDurationNamesLineAndField)
{
    std::istringstream in(std::string(kTraceHeader) + "\n0,0,5,1,1,1,BE,0\n1,0,0,1,1,1,BE,0\n");
    try {
        (void)read_trace(in);
        FAIL() << "expected parse error";
    } catch (const TraceParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.field(), "duration_min");
    }
}

TEST(Trace, MalformedInputs)
{
    auto parse = [](const std::string& body) {
        std::istringstream in(std::string(kTraceHeader) + "\n" + body);
        return read_trace(in);
    };
    EXPECT_THROW(parse("0,0,5,1,1,1,XX,0\n"), TraceParseError);
    EXPECT_THROW(parse("0,0,5,1,1,1,BE\n"), TraceParseError);
    EXPECT_THROW(parse("0,0,5,x,1,1,BE,0\n"), TraceParseError);
    EXPECT_THROW(parse("0,0,5,1,1,1,BE,0\n0,1,5,1,1,1,BE,0\n"), TraceParseError);
    std::istringstream bad_header("id,submit\n");
    EXPECT_THROW((void)read_trace(bad_header), TraceParseError);
}

TEST(Trace, SortsBySubmitTime)
{
    std::istringstream in(std::string(kTraceHeader) + "\n0,9,5,1,1,1,BE,0\n1,2,5,1,1,1,BE,0\n");
    const auto jobs = read_trace(in);
    EXPECT_EQ(jobs[0].id, 1);
    EXPECT_EQ(jobs[1].id, 0);
}
