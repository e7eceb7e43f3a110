#pragma once

#include "fitgpp/cluster.hpp"
#include "fitgpp/domain.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fitgpp {

enum class PolicyKind : std::uint8_t { FIFO, LRTP, RAND, FitGpp };

[[nodiscard]] inline std::string_view to_string(PolicyKind k)
{
    switch (k) {
    case PolicyKind::FIFO: return "FIFO";
    case PolicyKind::LRTP: return "LRTP";
    case PolicyKind::RAND: return "RAND";
    case PolicyKind::FitGpp: return "FitGpp";
    }
    return "?";
}

[[nodiscard]] inline std::optional<PolicyKind> parse_policy_kind(std::string_view s)
{
    if (s == "FIFO" || s == "fifo") return PolicyKind::FIFO;
    if (s == "LRTP" || s == "lrtp") return PolicyKind::LRTP;
    if (s == "RAND" || s == "rand") return PolicyKind::RAND;
    if (s == "FitGpp" || s == "fitgpp" || s == "FITGPP") return PolicyKind::FitGpp;
    return std::nullopt;
}

/// Which jobs may be preempted and how victims are chosen.
struct PolicyConfig {
    PolicyKind kind = PolicyKind::FIFO;
    /// Weight of the grace-period term in the FitGpp score.
    double s = 4.0;
    /// Per-job preemption cap; empty means unlimited.
    std::optional<int> max_preemptions = 1;
    std::uint64_t rng_seed = 0;

    [[nodiscard]] bool preemptive() const { return kind != PolicyKind::FIFO; }

    [[nodiscard]] bool below_cap(int preemption_count) const
    {
        return !max_preemptions || preemption_count < *max_preemptions;
    }

    void validate() const
    {
        if (!(s >= 0.0)) throw std::invalid_argument("policy parameter s must be >= 0");
        if (max_preemptions && *max_preemptions < 1) {
            throw std::invalid_argument("preemption cap P must be >= 1 or unlimited");
        }
    }

    friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

struct PreemptionPlan {
    std::vector<JobId> victims;
    NodeId target_node = 0;
    bool fallback_used = false;

    friend bool operator==(const PreemptionPlan&, const PreemptionPlan&) = default;
};

using Rng = std::mt19937_64;

namespace detail {

struct ScoreNorms {
    double max_size = 0.0;
    Minute max_gp = 0;
};

inline ScoreNorms score_norms(const ClusterState& cluster,
                              const std::vector<std::pair<JobId, NodeId>>& running_be)
{
    ScoreNorms norms;
    for (const auto& [id, nid] : running_be) {
        const auto& job = cluster.job(id).job;
        norms.max_size = std::max(norms.max_size, size(job.demand, cluster.node_capacity(nid)));
        norms.max_gp = std::max(norms.max_gp, job.grace_period);
    }
    return norms;
}

inline double score_with(const ClusterState& cluster, JobId id, NodeId nid, const ScoreNorms& norms,
                         double s)
{
    const auto& job = cluster.job(id).job;
    const double size_term = norms.max_size > 0.0
                                 ? size(job.demand, cluster.node_capacity(nid)) / norms.max_size
                                 : 0.0;
    // All grace periods zero: the term cannot discriminate, so it vanishes.
    const double gp_term = norms.max_gp > 0 ? static_cast<double>(job.grace_period) /
                                                  static_cast<double>(norms.max_gp)
                                            : 0.0;
    return size_term + s * gp_term;
}

/// Running BE jobs below the preemption cap, ascending by id.
inline std::vector<std::pair<JobId, NodeId>> eligible_be(const ClusterState& cluster,
                                                         const PolicyConfig& cfg)
{
    auto out = cluster.running_be_jobs();
    std::erase_if(out, [&](const auto& p) { return !cfg.below_cap(cluster.job(p.first).preemption_count); });
    std::sort(out.begin(), out.end());
    return out;
}

/// Shared driver for LRTP and RAND. Victims are taken cluster-wide in the
/// order produced by `order`; preemption continues until some node's free
/// resources plus the victims taken from it cover `te`, and that node becomes
/// the target. Victims on other nodes stay preempted. Returns empty when no
/// node could be made to fit even by preempting every eligible job.
template <typename OrderFn>
std::optional<PreemptionPlan> select_greedy(const Job& te, const ClusterState& cluster,
                                            const PolicyConfig& cfg, OrderFn&& order)
{
    auto eligible = eligible_be(cluster, cfg);
    if (eligible.empty()) return std::nullopt;

    std::vector<Demand> pool;
    pool.reserve(cluster.nodes().size());
    for (const auto& n : cluster.nodes()) pool.push_back(n.free);
    {
        auto reachable = pool;
        for (const auto& [id, nid] : eligible) reachable[static_cast<std::size_t>(nid)] += cluster.job(id).job.demand;
        const bool any = std::any_of(reachable.begin(), reachable.end(),
                                     [&](const Demand& d) { return demand_le(te.demand, d); });
        if (!any) return std::nullopt;
    }

    PreemptionPlan plan;
    for (const auto& [id, nid] : order(std::move(eligible))) {
        plan.victims.push_back(id);
        auto& p = pool[static_cast<std::size_t>(nid)];
        p += cluster.job(id).job.demand;
        if (demand_le(te.demand, p)) {
            plan.target_node = nid;
            return plan;
        }
    }
    return std::nullopt; // unreachable: feasibility was checked above
}

} // namespace detail

/// Normalised FitGpp score of a running BE job against all running BE jobs.
[[nodiscard]] inline double score(JobId job_id, const ClusterState& cluster, const PolicyConfig& cfg)
{
    const auto running_be = cluster.running_be_jobs();
    if (running_be.empty()) throw std::logic_error("score: no running BE jobs");
    const auto it = std::find_if(running_be.begin(), running_be.end(),
                                 [&](const auto& p) { return p.first == job_id; });
    if (it == running_be.end()) {
        throw std::logic_error("score: job " + std::to_string(job_id) + " is not a running BE job");
    }
    return detail::score_with(cluster, job_id, it->second, detail::score_norms(cluster, running_be),
                              cfg.s);
}

/// Picks the single lowest-score BE job whose release alone makes room for
/// `te` on its node. Falls back to a uniformly random BE job below the cap.
[[nodiscard]] inline std::optional<PreemptionPlan>
select_victims_fitgpp(const Job& te, const ClusterState& cluster, const PolicyConfig& cfg, Rng& rng)
{
    const auto running_be = cluster.running_be_jobs();
    if (running_be.empty()) return std::nullopt;
    const auto norms = detail::score_norms(cluster, running_be);

    std::optional<std::pair<JobId, NodeId>> best;
    double best_score = 0.0;
    std::vector<std::pair<JobId, NodeId>> below_cap;
    for (const auto& [id, nid] : running_be) {
        const auto& rt = cluster.job(id);
        if (!cfg.below_cap(rt.preemption_count)) continue;
        below_cap.emplace_back(id, nid);
        if (!fits(te.demand, rt.job.demand, cluster.node(nid).free)) continue;
        const double sc = detail::score_with(cluster, id, nid, norms, cfg.s);
        if (!best || sc < best_score || (sc == best_score && id < best->first)) {
            best = {id, nid};
            best_score = sc;
        }
    }
    if (best) return PreemptionPlan{{best->first}, best->second, false};
    if (below_cap.empty()) return std::nullopt;

    std::sort(below_cap.begin(), below_cap.end());
    std::uniform_int_distribution<std::size_t> pick(0, below_cap.size() - 1);
    const auto& [id, nid] = below_cap[pick(rng)];
    return PreemptionPlan{{id}, nid, true};
}

/// Longest remaining time first, cluster-wide, until the TE job fits on some
/// node. Remaining time is read from the simulator, i.e. known perfectly.
[[nodiscard]] inline std::optional<PreemptionPlan>
select_victims_lrtp(const Job& te, const ClusterState& cluster, const PolicyConfig& cfg)
{
    return detail::select_greedy(te, cluster, cfg, [&](std::vector<std::pair<JobId, NodeId>> ids) {
        std::stable_sort(ids.begin(), ids.end(), [&](const auto& a, const auto& b) {
            return cluster.job(a.first).remaining > cluster.job(b.first).remaining;
        });
        return ids;
    });
}

/// Uniformly random running BE jobs, cluster-wide, until the TE job fits on
/// some node.
[[nodiscard]] inline std::optional<PreemptionPlan>
select_victims_rand(const Job& te, const ClusterState& cluster, const PolicyConfig& cfg, Rng& rng)
{
    return detail::select_greedy(te, cluster, cfg, [&](std::vector<std::pair<JobId, NodeId>> ids) {
        // Fisher-Yates from the back; one draw per position.
        for (std::size_t i = ids.size(); i > 1; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i - 1);
            std::swap(ids[i - 1], ids[pick(rng)]);
        }
        return ids;
    });
}

[[nodiscard]] inline std::optional<PreemptionPlan>
select_victims(const Job& te, const ClusterState& cluster, const PolicyConfig& cfg, Rng& rng)
{
    switch (cfg.kind) {
    case PolicyKind::FIFO: return std::nullopt;
    case PolicyKind::LRTP: return select_victims_lrtp(te, cluster, cfg);
    case PolicyKind::RAND: return select_victims_rand(te, cluster, cfg, rng);
    case PolicyKind::FitGpp: return select_victims_fitgpp(te, cluster, cfg, rng);
    }
    return std::nullopt;
}

} // namespace fitgpp
