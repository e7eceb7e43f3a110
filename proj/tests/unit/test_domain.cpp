#include "fitgpp/domain.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fitgpp;

namespace {

const Capacity kCap{32, 256.0, 8};

Demand d(std::int64_t c, double r, std::int64_t g)
{
    return {c, r, g};
}

} // namespace

TEST(Size, FullCapacityIsRootThree)
{
    EXPECT_NEAR(size(d(32, 256, 8), kCap), 1.7320508, 1e-7);
}

TEST(Size, ZeroDemandIsZero)
{
    EXPECT_DOUBLE_EQ(size(d(0, 0, 0), kCap), 0.0);
}

TEST(Size, HalfCapacityIsHalfRootThree)
{
    EXPECT_NEAR(size(d(16, 128, 4), kCap), 0.8660254, 1e-7);
}

TEST(Size, MatchesHandComputedNorm)
{
    // (8/32, 64/256, 2/8) = (0.25, 0.25, 0.25)
    EXPECT_NEAR(size(d(8, 64, 2), kCap), std::sqrt(3 * 0.0625), 1e-12);
}

TEST(Fits, BeDominatesElementwise)
{
    EXPECT_TRUE(fits(d(4, 32, 1), d(8, 64, 2), d(0, 0, 0)));
}

TEST(Fits, MissingGpuFails)
{
    EXPECT_FALSE(fits(d(4, 32, 1), d(2, 16, 0), d(1, 8, 0)));
}

TEST(Fits, ExactComponentwiseEquality)
{
    EXPECT_TRUE(fits(d(4, 32, 1), d(2, 16, 1), d(2, 16, 0)));
}

TEST(Fits, MonotoneInBeAndFree)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 8);
    for (int i = 0; i < 2000; ++i) {
        const Demand te = d(u(rng), u(rng) * 8.0, u(rng));
        const Demand be = d(u(rng), u(rng) * 8.0, u(rng));
        const Demand free = d(u(rng), u(rng) * 8.0, u(rng));
        if (!fits(te, be, free)) continue;
        const Demand more = d(u(rng), u(rng) * 8.0, u(rng));
        EXPECT_TRUE(fits(te, be + more, free));
        EXPECT_TRUE(fits(te, be, free + more));
    }
}

TEST(DemandLe, Examples)
{
    EXPECT_TRUE(demand_le(d(0, 0, 0), d(0, 0, 0)));
    EXPECT_FALSE(demand_le(d(1, 1, 1), d(1, 1, 0)));
    EXPECT_TRUE(demand_le(d(4, 32, 1), d(32, 256, 8)));
}

TEST(DemandLe, IsAPartialOrder)
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> u(0, 3);
    auto draw = [&] { return d(u(rng), u(rng) * 0.5, u(rng)); };
    for (int i = 0; i < 5000; ++i) {
        const Demand a = draw(), b = draw(), c = draw();
        EXPECT_TRUE(demand_le(a, a));
        if (demand_le(a, b) && demand_le(b, a)) {
            EXPECT_EQ(a, b);
        }
        if (demand_le(a, b) && demand_le(b, c)) {
            EXPECT_TRUE(demand_le(a, c));
        }
    }
}

TEST(Demand, ShortfallAndMin)
{
    EXPECT_EQ(shortfall(d(4, 32, 2), d(1, 40, 2)), d(3, 0, 0));
    EXPECT_EQ(elementwise_min(d(4, 32, 2), d(1, 40, 2)), d(1, 32, 2));
}

TEST(Capacity, RejectsNonPositiveComponents)
{
    EXPECT_THROW(Capacity(0, 256, 8), std::invalid_argument);
    EXPECT_THROW(Capacity(32, 0.0, 8), std::invalid_argument);
    EXPECT_THROW(Capacity(32, 256, -1), std::invalid_argument);
}

TEST(Job, ValidateRejectsBadValues)
{
    Job ok{1, JobClass::BE, d(1, 1, 0), 5, 0, 0};
    EXPECT_NO_THROW(validate(ok));
    auto bad = ok;
    bad.duration = 0;
    EXPECT_THROW(validate(bad), std::invalid_argument);
    bad = ok;
    bad.grace_period = -1;
    EXPECT_THROW(validate(bad), std::invalid_argument);
    bad = ok;
    bad.demand = d(0, 0, 0);
    EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(JobClass, RoundTrip)
{
    for (auto c : {JobClass::TE, JobClass::BE}) EXPECT_EQ(parse_job_class(to_string(c)), c);
    EXPECT_FALSE(parse_job_class("XX"));
}

TEST(Lifecycle, LegalPathAndIllegalMoves)
{
    JobRuntime rt(Job{1, JobClass::BE, d(1, 1, 0), 5, 0, 0});
    EXPECT_EQ(rt.remaining, 5);
    transition(rt, JobState::Running);
    transition(rt, JobState::Draining);
    transition(rt, JobState::Suspended);
    transition(rt, JobState::Queued);
    transition(rt, JobState::Running);
    transition(rt, JobState::Finished);
    EXPECT_THROW(transition(rt, JobState::Running), std::logic_error);

    JobRuntime q(Job{2, JobClass::BE, d(1, 1, 0), 5, 0, 0});
    EXPECT_THROW(transition(q, JobState::Draining), std::logic_error);
    EXPECT_FALSE(is_valid_transition(JobState::Suspended, JobState::Running));
}
