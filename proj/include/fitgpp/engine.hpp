#pragma once

#include "fitgpp/cluster.hpp"
#include "fitgpp/domain.hpp"
#include "fitgpp/policies.hpp"
#include "fitgpp/result.hpp"

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fitgpp {

struct SimConfig {
    std::size_t node_count = 84;
    Capacity node_capacity{32, 256.0, 8};
    PolicyConfig policy;
    /// Stop after this minute even if jobs remain; the result is then truncated.
    std::optional<Minute> horizon;
    /// Restart preempted jobs from scratch instead of resuming them.
    bool rewind_on_preempt = false;
    /// Assert capacity conservation after every tick.
    bool check_invariants = false;
};

/// Minute-stepped cluster simulation.
///
/// Each tick runs, in order: completions, grace-period drains, starts of TE
/// jobs whose reservation is funded, arrivals, one scheduling pass, and one
/// minute of progress for every Running job.
///
/// The queue is FIFO with no backfilling: a BE job at the head that does not
/// fit blocks everything behind it. Preempted jobs re-enter at the head.
/// Under a preemptive policy TE jobs wait in a priority lane that is served
/// before the BE queue; a TE job that cannot be placed asks the policy for
/// victims and reserves their resources while they drain.
class Simulator {
public:
    Simulator(std::span<const Job> workload, SimConfig cfg)
        : cfg_(std::move(cfg)),
          cluster_(cfg_.node_count, cfg_.node_capacity),
          rng_(cfg_.policy.rng_seed),
          digest_(workload_digest(workload))
    {
        cfg_.policy.validate();
        arrivals_.assign(workload.begin(), workload.end());
        if (!std::is_sorted(arrivals_.begin(), arrivals_.end(),
                            [](const Job& a, const Job& b) { return a.submit_time < b.submit_time; })) {
            throw std::invalid_argument("workload must be sorted by submit time");
        }
        for (const auto& job : arrivals_) {
            if (!demand_le(job.demand, cfg_.node_capacity.as_demand())) {
                throw std::invalid_argument("job " + std::to_string(job.id) +
                                            " demands more than a single node provides");
            }
            cluster_.add_job(job);
        }
        if (!arrivals_.empty()) now_ = arrivals_.front().submit_time;
    }

    [[nodiscard]] const ClusterState& cluster() const { return cluster_; }
    [[nodiscard]] Minute now() const { return now_; }
    [[nodiscard]] bool done() const { return finished_ == arrivals_.size(); }
    [[nodiscard]] const std::deque<JobId>& queue() const { return queue_; }
    [[nodiscard]] const std::deque<JobId>& te_lane() const { return te_lane_; }
    [[nodiscard]] std::span<const Event> events() const { return events_; }

    /// Runs until every job has finished or the horizon is passed.
    SimulationResult run()
    {
        bool truncated = false;
        while (!done()) {
            if (cfg_.horizon && now_ > *cfg_.horizon) {
                truncated = true;
                break;
            }
            if (idle() && next_arrival_ < arrivals_.size()) {
                now_ = std::max(now_, arrivals_[next_arrival_].submit_time);
            }
            tick(now_);
            ++now_;
        }
        return result(truncated);
    }

    /// One scheduling round at minute `t`.
    void tick(Minute t)
    {
        if (t < last_tick_) throw std::logic_error("tick: time went backwards");
        last_tick_ = t;
        now_ = t;

        complete_finished(t);
        complete_drains(t);
        start_funded_reservations(t);
        admit_arrivals(t);
        schedule_pass(t);
        advance();

        if (cfg_.check_invariants) {
            std::string why;
            if (!cluster_.conserves_capacity(&why)) throw std::logic_error("tick " + std::to_string(t) + ": " + why);
        }
    }

    /// Scans the TE lane (preemptive policies only), then the FIFO queue.
    void schedule_pass(Minute t)
    {
        if (cfg_.policy.preemptive()) serve_te_lane(t);

        while (!queue_.empty()) {
            const JobId head = queue_.front();
            const auto node = cluster_.first_fit(cluster_.job(head).job.demand);
            if (!node) break;
            cluster_.allocate(*node, head);
            on_started(head, t);
            queue_.pop_front();
        }
    }

    /// Tells a running BE job to drain within its grace period.
    void signal_suspend(JobId id, Minute t)
    {
        auto& rt = cluster_.job_mut(id);
        if (rt.job.job_class != JobClass::BE || rt.state != JobState::Running) {
            throw std::logic_error("signal_suspend: job " + std::to_string(id) +
                                   " is not a running BE job");
        }
        transition(rt, JobState::Draining);
        rt.drain_deadline = t + rt.job.grace_period;
        ++rt.preemption_count;
        rt.interval_log.push_back({t, std::nullopt});
        draining_.push_back(id);
        log(t, id, EventKind::SuspendSignal, rt.node);
    }

    [[nodiscard]] SimulationResult result(bool truncated) const
    {
        SimulationResult out;
        out.policy = cfg_.policy;
        out.workload_digest = digest_;
        out.truncated = truncated;
        out.end_minute = now_;
        out.plans = plans_;
        out.fallback_plans = fallback_plans_;
        out.events = events_;
        out.jobs.reserve(arrivals_.size());
        for (const auto& job : arrivals_) {
            const auto& rt = cluster_.job(job.id);
            out.jobs.push_back({job.id, job.job_class, job.demand, job.duration, job.grace_period,
                                job.submit_time, rt.first_start, rt.finish_time, rt.running_minutes,
                                rt.draining_minutes, rt.preemption_count, rt.interval_log});
        }
        return out;
    }

private:
    [[nodiscard]] bool idle() const
    {
        return active_.empty() && queue_.empty() && te_lane_.empty();
    }

    void log(Minute t, JobId id, EventKind kind, std::optional<NodeId> node = std::nullopt)
    {
        events_.push_back({t, id, kind, node});
    }

    void on_started(JobId id, Minute t)
    {
        auto& rt = cluster_.job_mut(id);
        active_.push_back(id);
        if (!rt.first_start) {
            rt.first_start = t;
            log(t, id, EventKind::Start, rt.node);
        } else {
            rt.interval_log.back().resume = t;
            log(t, id, EventKind::Resume, rt.node);
        }
    }

    void complete_finished(Minute t)
    {
        std::vector<JobId> done;
        for (JobId id : active_) {
            const auto& rt = cluster_.job(id);
            if (rt.state == JobState::Running && rt.remaining == 0) done.push_back(id);
        }
        std::sort(done.begin(), done.end());
        std::vector<NodeId> touched;
        for (JobId id : done) {
            const NodeId nid = cluster_.release(id);
            auto& rt = cluster_.job_mut(id);
            transition(rt, JobState::Finished);
            rt.finish_time = t;
            ++finished_;
            touched.push_back(nid);
            log(t, id, EventKind::Finish, nid);
        }
        erase_inactive();
        fund(touched);
    }

    void complete_drains(Minute t)
    {
        std::vector<JobId> due;
        for (JobId id : draining_) {
            if (*cluster_.job(id).drain_deadline <= t) due.push_back(id);
        }
        finish_drains(due, t);
    }

    // Releases drained victims, funds reservations on their nodes, and puts the
    // victims back at the head of the queue, earliest submission first.
    void finish_drains(std::vector<JobId> due, Minute t)
    {
        if (due.empty()) return;
        std::sort(due.begin(), due.end());
        std::vector<NodeId> touched;
        for (JobId id : due) {
            const NodeId nid = cluster_.release(id);
            auto& rt = cluster_.job_mut(id);
            transition(rt, JobState::Suspended);
            transition(rt, JobState::Queued);
            rt.drain_deadline.reset();
            if (cfg_.rewind_on_preempt) rt.remaining = rt.job.duration;
            touched.push_back(nid);
            log(t, id, EventKind::Requeue, nid);
            if (const auto owner = victim_owner_.find(id); owner != victim_owner_.end()) {
                --outstanding_[owner->second];
                victim_owner_.erase(owner);
            }
        }
        std::erase_if(draining_, [&](JobId id) {
            return std::find(due.begin(), due.end(), id) != due.end();
        });
        erase_inactive();
        fund(touched);

        std::sort(due.begin(), due.end(), [&](JobId a, JobId b) {
            const auto& ja = cluster_.job(a).job;
            const auto& jb = cluster_.job(b).job;
            return ja.submit_time != jb.submit_time ? ja.submit_time < jb.submit_time : a < b;
        });
        for (auto it = due.rbegin(); it != due.rend(); ++it) queue_.push_front(*it);
    }

    void fund(std::vector<NodeId>& nodes)
    {
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        for (NodeId nid : nodes) cluster_.fund_reservations(nid);
    }

    void erase_inactive()
    {
        std::erase_if(active_, [&](JobId id) { return !cluster_.job(id).node.has_value(); });
    }

    void start_funded_reservations(Minute t)
    {
        std::vector<JobId> ready;
        std::vector<JobId> stale;
        for (const auto& r : cluster_.reservations()) {
            if (r.funded()) {
                ready.push_back(r.te_job);
            } else if (outstanding_[r.te_job] == 0) {
                stale.push_back(r.te_job);
            }
        }
        for (JobId id : ready) start_reserved(id, t);
        // Every victim has drained and the job still does not fit: give the
        // resources back and let the next pass plan again.
        for (JobId id : stale) {
            cluster_.cancel_reservation(id);
            outstanding_.erase(id);
        }
    }

    void start_reserved(JobId id, Minute t)
    {
        cluster_.allocate_reserved(id);
        outstanding_.erase(id);
        std::erase(te_lane_, id);
        on_started(id, t);
    }

    void admit_arrivals(Minute t)
    {
        while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_].submit_time <= t) {
            const auto& job = arrivals_[next_arrival_++];
            log(t, job.id, EventKind::Submit);
            if (cfg_.policy.preemptive() && job.job_class == JobClass::TE) {
                te_lane_.push_back(job.id);
            } else {
                queue_.push_back(job.id);
            }
        }
    }

    void serve_te_lane(Minute t)
    {
        const std::vector<JobId> waiting(te_lane_.begin(), te_lane_.end());
        for (JobId id : waiting) {
            if (cluster_.find_reservation(id)) continue;
            const Job& te = cluster_.job(id).job;
            if (const auto node = cluster_.first_fit(te.demand)) {
                cluster_.allocate(*node, id);
                std::erase(te_lane_, id);
                on_started(id, t);
                continue;
            }
            const auto plan = select_victims(te, cluster_, cfg_.policy, rng_);
            if (!plan) continue;
            ++plans_;
            if (plan->fallback_used) ++fallback_plans_;

            cluster_.reserve(id, plan->target_node);
            std::vector<JobId> immediate;
            for (JobId victim : plan->victims) {
                signal_suspend(victim, t);
                victim_owner_[victim] = id;
                ++outstanding_[id];
                if (cluster_.job(victim).job.grace_period == 0) immediate.push_back(victim);
            }
            finish_drains(std::move(immediate), t);
            if (cluster_.find_reservation(id)->funded()) start_reserved(id, t);
        }
    }

    void advance()
    {
        for (JobId id : active_) {
            auto& rt = cluster_.job_mut(id);
            if (rt.state == JobState::Running) {
                --rt.remaining;
                ++rt.running_minutes;
            } else if (rt.state == JobState::Draining) {
                ++rt.draining_minutes;
            }
        }
    }

    SimConfig cfg_;
    ClusterState cluster_;
    Rng rng_;
    std::uint64_t digest_;

    std::vector<Job> arrivals_;
    std::size_t next_arrival_ = 0;
    std::size_t finished_ = 0;
    std::size_t plans_ = 0;
    std::size_t fallback_plans_ = 0;
    Minute now_ = 0;
    Minute last_tick_ = std::numeric_limits<Minute>::min();

    std::deque<JobId> queue_;
    std::deque<JobId> te_lane_;
    std::vector<JobId> active_;
    std::vector<JobId> draining_;
    std::unordered_map<JobId, JobId> victim_owner_;
    std::unordered_map<JobId, int> outstanding_;
    std::vector<Event> events_;
};

/// Simulates `workload` under `cfg` from the first submission until every job
/// finishes (or the horizon passes).
[[nodiscard]] inline SimulationResult run(std::span<const Job> workload, const SimConfig& cfg)
{
    return Simulator(workload, cfg).run();
}

} // namespace fitgpp
