#pragma once

#include "fitgpp/domain.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fitgpp {

struct Node {
    NodeId id = 0;
    Capacity capacity;
    Demand free;
    Demand reserved;
    std::vector<JobId> running; // sorted ascending

    Node(NodeId node_id, Capacity cap) : id(node_id), capacity(cap), free(cap.as_demand()) {}
};

/// Resources earmarked on one node for a TE job waiting for its victims to
/// drain. `held` never exceeds `need`.
struct Reservation {
    JobId te_job = 0;
    NodeId node = 0;
    Demand need;
    Demand held;

    [[nodiscard]] bool funded() const { return demand_le(need, held); }
};

/// Node-level resource accounting plus the table of every job in the
/// simulation. Mutated only by the owning engine.
class ClusterState {
public:
    ClusterState(std::size_t node_count, const Capacity& cap)
    {
        if (node_count == 0) {
            throw std::invalid_argument("cluster needs at least one node");
        }
        nodes_.reserve(node_count);
        for (std::size_t i = 0; i < node_count; ++i) {
            nodes_.emplace_back(static_cast<NodeId>(i), cap);
        }
    }

    [[nodiscard]] std::span<const Node> nodes() const { return nodes_; }
    [[nodiscard]] const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    Node& node_mut(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }

    [[nodiscard]] const Capacity& node_capacity(NodeId id) const { return node(id).capacity; }

    void add_job(const Job& job)
    {
        validate(job);
        if (index_.contains(job.id)) {
            throw std::invalid_argument("duplicate job id " + std::to_string(job.id));
        }
        index_.emplace(job.id, jobs_.size());
        jobs_.emplace_back(job);
    }

    [[nodiscard]] bool has_job(JobId id) const { return index_.contains(id); }

    [[nodiscard]] const JobRuntime& job(JobId id) const { return jobs_[index_of(id)]; }
    JobRuntime& job_mut(JobId id) { return jobs_[index_of(id)]; }

    [[nodiscard]] std::span<const JobRuntime> jobs() const { return jobs_; }
    std::span<JobRuntime> jobs_mut() { return jobs_; }

    /// Lowest-id node whose free resources dominate `d`.
    [[nodiscard]] std::optional<NodeId> first_fit(const Demand& d) const
    {
        for (const auto& n : nodes_) {
            if (demand_le(d, n.free)) return n.id;
        }
        return std::nullopt;
    }

    /// Starts a queued job on `node_id` using the node's free resources.
    void allocate(NodeId node_id, JobId job_id)
    {
        auto& rt = job_mut(job_id);
        auto& n = node_mut(node_id);
        if (!demand_le(rt.job.demand, n.free)) {
            throw std::logic_error("allocate: job " + std::to_string(job_id) +
                                   " does not fit on node " + std::to_string(node_id));
        }
        n.free -= rt.job.demand;
        place(n, rt);
    }

    /// Removes a Running or Draining job from its node and returns the node id.
    /// Freed resources go to the node's free pool; call fund_reservations() to
    /// move them into pending reservations.
    NodeId release(JobId job_id)
    {
        if (!has_job(job_id)) {
            throw std::out_of_range("release: unknown job id " + std::to_string(job_id));
        }
        auto& rt = job_mut(job_id);
        if ((rt.state != JobState::Running && rt.state != JobState::Draining) || !rt.node) {
            throw std::logic_error("release: job " + std::to_string(job_id) + " is not on a node");
        }
        const NodeId nid = *rt.node;
        auto& n = node_mut(nid);
        const auto it = std::lower_bound(n.running.begin(), n.running.end(), job_id);
        n.running.erase(it);
        n.free += rt.job.demand;
        snap_ram(n);
        rt.node.reset();
        return nid;
    }

    /// Running (not Draining) BE jobs, ordered by node id then job id.
    [[nodiscard]] std::vector<std::pair<JobId, NodeId>> running_be_jobs() const
    {
        std::vector<std::pair<JobId, NodeId>> out;
        for (const auto& n : nodes_) {
            for (JobId id : n.running) {
                const auto& rt = job(id);
                if (rt.job.job_class == JobClass::BE && rt.state == JobState::Running) {
                    out.emplace_back(id, n.id);
                }
            }
        }
        return out;
    }

    /// Opens a reservation for `te_job` on `node_id`, immediately capturing the
    /// part of the node's free resources the job needs.
    void reserve(JobId te_job, NodeId node_id)
    {
        if (find_reservation(te_job)) {
            throw std::logic_error("job " + std::to_string(te_job) + " already holds a reservation");
        }
        reservations_.push_back({te_job, node_id, job(te_job).job.demand, {}});
        fund(reservations_.back());
    }

    /// Tops up every pending reservation on `node_id` from free resources, in
    /// reservation order.
    void fund_reservations(NodeId node_id)
    {
        for (auto& r : reservations_) {
            if (r.node == node_id) fund(r);
        }
    }

    [[nodiscard]] const Reservation* find_reservation(JobId te_job) const
    {
        const auto it = std::find_if(reservations_.begin(), reservations_.end(),
                                     [&](const Reservation& r) { return r.te_job == te_job; });
        return it == reservations_.end() ? nullptr : &*it;
    }

    [[nodiscard]] std::span<const Reservation> reservations() const { return reservations_; }

    /// Starts a TE job from its funded reservation; any surplus returns to free.
    void allocate_reserved(JobId te_job)
    {
        const auto it = reservation_iter(te_job);
        if (!it->funded()) {
            throw std::logic_error("reservation for job " + std::to_string(te_job) + " is not funded");
        }
        auto& n = node_mut(it->node);
        auto& rt = job_mut(te_job);
        n.reserved -= it->held;
        n.free += it->held - rt.job.demand;
        snap_ram(n);
        place(n, rt);
        reservations_.erase(it);
    }

    /// Drops a reservation, returning whatever it held to the free pool.
    void cancel_reservation(JobId te_job)
    {
        const auto it = reservation_iter(te_job);
        auto& n = node_mut(it->node);
        n.reserved -= it->held;
        n.free += it->held;
        snap_ram(n);
        reservations_.erase(it);
    }

    /// Verifies free + reserved + running demands == capacity on every node.
    [[nodiscard]] bool conserves_capacity(std::string* why = nullptr) const
    {
        for (const auto& n : nodes_) {
            Demand total = n.free + n.reserved;
            for (JobId id : n.running) total += job(id).job.demand;
            const Demand& cap = n.capacity.as_demand();
            const bool ok = total.cpu == cap.cpu && total.gpu == cap.gpu &&
                            std::abs(total.ram - cap.ram) <= kRamEpsilon * std::max(1.0, cap.ram) &&
                            n.free.cpu >= 0 && n.free.gpu >= 0 && n.reserved.cpu >= 0 && n.reserved.gpu >= 0 &&
                            n.reserved.ram >= -kRamEpsilon && n.free.ram >= -kRamEpsilon;
            if (!ok) {
                if (why) *why = "node " + std::to_string(n.id) + " violates capacity conservation";
                return false;
            }
        }
        return true;
    }

private:
    [[nodiscard]] std::size_t index_of(JobId id) const
    {
        const auto it = index_.find(id);
        if (it == index_.end()) throw std::out_of_range("unknown job id " + std::to_string(id));
        return it->second;
    }

    std::vector<Reservation>::iterator reservation_iter(JobId te_job)
    {
        const auto it = std::find_if(reservations_.begin(), reservations_.end(),
                                     [&](const Reservation& r) { return r.te_job == te_job; });
        if (it == reservations_.end()) {
            throw std::logic_error("no reservation for job " + std::to_string(te_job));
        }
        return it;
    }

    void place(Node& n, JobRuntime& rt)
    {
        n.running.insert(std::upper_bound(n.running.begin(), n.running.end(), rt.job.id), rt.job.id);
        rt.node = n.id;
        transition(rt, JobState::Running);
    }

    void fund(Reservation& r)
    {
        auto& n = node_mut(r.node);
        const Demand take = elementwise_min(shortfall(r.need, r.held), n.free);
        n.free -= take;
        n.reserved += take;
        r.held += take;
        snap_ram(n);
    }

    // RAM is a double; clamp accumulated round-off so that an empty node
    // reports exactly zero or exactly its capacity.
    static void snap_ram(Node& n)
    {
        if (std::abs(n.free.ram) < kRamEpsilon) n.free.ram = 0.0;
        if (std::abs(n.reserved.ram) < kRamEpsilon) n.reserved.ram = 0.0;
        if (std::abs(n.free.ram - n.capacity.ram()) < kRamEpsilon) n.free.ram = n.capacity.ram();
    }

    std::vector<Node> nodes_;
    std::vector<JobRuntime> jobs_;
    std::unordered_map<JobId, std::size_t> index_;
    std::vector<Reservation> reservations_;
};

} // namespace fitgpp
