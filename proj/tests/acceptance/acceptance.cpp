// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fail.
//
//   acceptance --profile full     2^16 jobs on 84 nodes, criteria 1-11
//   acceptance --profile reduced  2^12 jobs on 12 nodes, criteria 1-5

#include "fitgpp/engine.hpp"
#include "fitgpp/metrics.hpp"
#include "fitgpp/workload.hpp"
#include "property/properties.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace fitgpp;

namespace {

struct Profile {
    std::string name;
    std::size_t jobs = 0;
    std::size_t nodes = 0;
    bool full = false;
};

/// Percentiles of one policy on one workload; RAND is averaged over seeds.
struct Row {
    std::array<double, 3> te{};
    std::array<double, 3> be{};
    double interval_p50 = 0.0;
    double at_least_once = 0.0;
    double once = 0.0;
};

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string fmt3(const std::array<double, 3>& a)
{
    return fmt(a[0]) + "/" + fmt(a[1]) + "/" + fmt(a[2]);
}

class Harness {
public:
    Harness(Profile p, std::uint64_t seed) : p_(std::move(p)), seed_(seed) {}

    const Profile& profile() const { return p_; }

    WorkloadSpec spec(double te_fraction = 0.3, double gp_scale = 1.0) const
    {
        WorkloadSpec s;
        s.total_jobs = p_.jobs;
        s.node_count = p_.nodes;
        s.te_fraction = te_fraction;
        s.gp_scale = gp_scale;
        s.seed = seed_;
        return s;
    }

    const std::vector<Job>& workload(double te_fraction = 0.3, double gp_scale = 1.0)
    {
        const auto key = std::pair{te_fraction, gp_scale};
        auto it = workloads_.find(key);
        if (it == workloads_.end()) it = workloads_.emplace(key, generate(spec(te_fraction, gp_scale))).first;
        return it->second;
    }

    Row row(PolicyKind kind, double s = 4.0, std::optional<int> P = 1, double te_fraction = 0.3,
            double gp_scale = 1.0)
    {
        const auto& jobs = workload(te_fraction, gp_scale);
        const std::vector<std::uint64_t> seeds =
            kind == PolicyKind::RAND ? std::vector<std::uint64_t>{1, 2, 3, 4} : std::vector<std::uint64_t>{1};
        std::vector<RunSummary> runs;
        for (auto seed : seeds) {
            SimConfig cfg;
            cfg.node_count = p_.nodes;
            cfg.policy.kind = kind;
            cfg.policy.s = s;
            cfg.policy.max_preemptions = P;
            cfg.policy.rng_seed = seed;
            const auto r = run(jobs, cfg);
            if (r.truncated) throw std::runtime_error("simulation truncated");
            runs.push_back(summarize(r, "x"));
        }
        const auto rep = compare_report(runs);
        const auto& rr = rep.rows.at(0);
        Row out;
        if (!rr.slowdown.te || !rr.slowdown.be) throw std::runtime_error("a job class finished no jobs");
        out.te = *rr.slowdown.te;
        out.be = *rr.slowdown.be;
        out.interval_p50 = rr.intervals ? (*rr.intervals)[0] : 0.0;
        out.at_least_once = rr.preemptions.at_least_once;
        out.once = rr.preemptions.once;
        return out;
    }

private:
    Profile p_;
    std::uint64_t seed_;
    std::map<std::pair<double, double>, std::vector<Job>> workloads_;
};

class Reporter {
public:
    void check(int id, const std::string& title, bool ok, const std::string& detail)
    {
        std::printf("criterion %2d %s  %s  [%s]\n", id, ok ? "PASS" : "FAIL", title.c_str(), detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed_;
    }

    int failed() const { return failed_; }

private:
    int failed_ = 0;
};

/// (max - min) / min over the values.
double spread(const std::vector<double>& v)
{
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) / *lo;
}

void core_criteria(Harness& h, Reporter& out)
{
    const bool full = h.profile().full;
    const Row fifo = h.row(PolicyKind::FIFO);
    const Row fit = h.row(PolicyKind::FitGpp);
    const Row lrtp = h.row(PolicyKind::LRTP);
    const Row rand = h.row(PolicyKind::RAND);

    const double te_red = 1.0 - fit.te[1] / fifo.te[1];
    out.check(1, "TE p95 reduction vs FIFO >= 90%", te_red >= 0.90,
              "FIFO " + fmt(fifo.te[1]) + ", FitGpp " + fmt(fit.te[1]) + ", reduction " + fmt(100 * te_red) + "%");

    const double be50 = fit.be[0] / fifo.be[0] - 1.0;
    const double be95 = fit.be[1] / fifo.be[1] - 1.0;
    out.check(2, "BE p50 +<=35%, p95 +<=40% vs FIFO", be50 <= 0.35 && be95 <= 0.40,
              "p50 " + fmt(100 * be50) + "%, p95 " + fmt(100 * be95) + "%");

    bool order = true;
    for (std::size_t i = 0; i < 3; ++i) {
        order = order && fit.te[i] <= lrtp.te[i] && fit.te[i] <= rand.te[i];
        order = order && fit.be[i] < lrtp.be[i] && fit.be[i] < rand.be[i];
    }
    out.check(3, "FitGpp TE <= and BE < LRTP, RAND", order,
              "TE " + fmt3(fit.te) + " vs " + fmt3(lrtp.te) + " / " + fmt3(rand.te) + "; BE " + fmt3(fit.be) +
                  " vs " + fmt3(lrtp.be) + " / " + fmt3(rand.be));

    out.check(4, "FitGpp interval p50 <= 0.75x baselines",
              fit.interval_p50 <= 0.75 * lrtp.interval_p50 && fit.interval_p50 <= 0.75 * rand.interval_p50,
              "FitGpp " + fmt(fit.interval_p50) + ", LRTP " + fmt(lrtp.interval_p50) + ", RAND " +
                  fmt(rand.interval_p50));

    const Row fit_inf = h.row(PolicyKind::FitGpp, 4.0, std::nullopt);
    const Row lrtp_inf = h.row(PolicyKind::LRTP, 4.0, std::nullopt);
    const Row rand_inf = h.row(PolicyKind::RAND, 4.0, std::nullopt);
    const std::string detail5 = "P=1 preempted " + fmt(100 * fit.at_least_once) + "% vs " +
                                fmt(100 * lrtp.at_least_once) + "% / " + fmt(100 * rand.at_least_once) +
                                "%; P=inf once " + fmt(100 * fit_inf.once) + "% vs " + fmt(100 * lrtp_inf.once) +
                                "% / " + fmt(100 * rand_inf.once) + "%";
    if (full) {
        const bool p1 = 5.0 * fit.at_least_once <= lrtp.at_least_once && 5.0 * fit.at_least_once <= rand.at_least_once;
        const bool pinf = 5.0 * fit_inf.once <= lrtp_inf.once && 5.0 * fit_inf.once <= rand_inf.once;
        out.check(5, "preemption volume >= 5x lower (P=1, P=inf)", p1 && pinf, detail5);
    } else {
        // The reduced profile is checked directionally.
        const bool p1 = fit.at_least_once < lrtp.at_least_once && fit.at_least_once < rand.at_least_once;
        const bool pinf = fit_inf.once < lrtp_inf.once && fit_inf.once < rand_inf.once;
        out.check(5, "preemption volume lower than baselines (directional)", p1 && pinf, detail5);
    }
}

void sweep_criteria(Harness& h, Reporter& out)
{
    // s axis.
    std::map<double, Row> by_s;
    for (double s : {0.5, 1.0, 2.0, 4.0, 8.0}) by_s[s] = h.row(PolicyKind::FitGpp, s);
    const double sat = std::abs(by_s[8.0].te[1] / by_s[4.0].te[1] - 1.0);
    double be_spread = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> v;
        for (const auto& [s, r] : by_s) v.push_back(r.be[i]);
        be_spread = std::max(be_spread, spread(v));
    }
    std::string te_axis;
    for (const auto& [s, r] : by_s) te_axis += (te_axis.empty() ? "" : ", ") + fmt(s) + ":" + fmt(r.te[1]);
    out.check(6, "s-axis: TE p95 saturates, BE varies < 10%",
              sat <= 0.05 && by_s[4.0].te[1] < by_s[0.5].te[1] && be_spread < 0.10,
              "TE p95 {" + te_axis + "}, |s8/s4-1| " + fmt(100 * sat) + "%, max BE spread " + fmt(100 * be_spread) +
                  "%");

    // P axis.
    std::vector<Row> by_p;
    for (std::optional<int> P : {std::optional<int>(1), std::optional<int>(2), std::optional<int>(4),
                                 std::optional<int>()}) {
        by_p.push_back(h.row(PolicyKind::FitGpp, 4.0, P));
    }
    double p_spread = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> te, be;
        for (const auto& r : by_p) {
            te.push_back(r.te[i]);
            be.push_back(r.be[i]);
        }
        p_spread = std::max({p_spread, spread(te), spread(be)});
    }
    out.check(7, "P-axis: TE/BE p50/p95 vary < 10%", p_spread < 0.10, "max spread " + fmt(100 * p_spread) + "%");

    // TE fraction axis.
    bool ok8 = true;
    std::string d8;
    for (double f : {0.1, 0.3, 0.5, 0.7}) {
        const Row fit = h.row(PolicyKind::FitGpp, 4.0, 1, f);
        const Row lrtp = h.row(PolicyKind::LRTP, 4.0, 1, f);
        const Row rand = h.row(PolicyKind::RAND, 4.0, 1, f);
        ok8 = ok8 && fit.te[1] <= lrtp.te[1] && fit.te[1] <= rand.te[1];
        d8 += (d8.empty() ? "" : "; ") + fmt(f) + ": " + fmt(fit.te[1]) + " vs " + fmt(lrtp.te[1]) + "/" +
              fmt(rand.te[1]);
    }
    out.check(8, "TE fraction axis: FitGpp TE p95 <= baselines", ok8, d8);

    // GP scale axis.
    const std::vector<double> scales{1.0, 2.0, 4.0, 8.0};
    std::map<std::string, std::vector<Row>> g;
    for (double k : scales) {
        g["FitGpp"].push_back(h.row(PolicyKind::FitGpp, 4.0, 1, 0.3, k));
        g["FitGpp-s8"].push_back(h.row(PolicyKind::FitGpp, 8.0, 1, 0.3, k));
        g["LRTP"].push_back(h.row(PolicyKind::LRTP, 4.0, 1, 0.3, k));
        g["RAND"].push_back(h.row(PolicyKind::RAND, 4.0, 1, 0.3, k));
    }
    bool mono = true;
    std::string d9;
    for (const char* name : {"FitGpp", "LRTP", "RAND"}) {
        const auto& rows = g[name];
        std::string series;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i > 0 && rows[i].te[1] < rows[i - 1].te[1]) mono = false;
            series += (series.empty() ? "" : ",") + fmt(rows[i].te[1]);
        }
        d9 += std::string(name) + " TE p95 {" + series + "} BE p95 {";
        for (std::size_t i = 0; i < rows.size(); ++i) d9 += (i ? "," : "") + fmt(rows[i].be[1]);
        d9 += "}; ";
    }
    const bool s8_better = g["FitGpp-s8"].back().te[1] <= g["FitGpp"].back().te[1];
    std::vector<double> fit_be95;
    for (const auto& r : g["FitGpp"]) fit_be95.push_back(r.be[1]);
    const double fit_be_spread = spread(fit_be95);
    const bool baselines_grow =
        g["LRTP"].back().be[1] > g["LRTP"].front().be[1] && g["RAND"].back().be[1] > g["RAND"].front().be[1];
    d9 += "gp8 s8 " + fmt(g["FitGpp-s8"].back().te[1]) + " vs s4 " + fmt(g["FitGpp"].back().te[1]) +
          "; FitGpp BE p95 spread " + fmt(100 * fit_be_spread) + "%";
    out.check(9, "GP-scale axis", mono && s8_better && fit_be_spread < 0.15 && baselines_grow, d9);
}

void property_criterion(Reporter& out)
{
    std::mt19937_64 rng(20240601);
    std::size_t bad = 0, oracle_mismatch = 0, nondeterministic = 0, oracle_cases = 0;
    std::string first;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto c = props::random_case(rng, 40, 3);
        try {
            const auto r = run(c.jobs, c.cfg);
            const auto v = props::violations(c, r);
            if (!v.empty()) {
                if (first.empty()) first = v.front();
                ++bad;
            }
            if (!(r == run(c.jobs, c.cfg))) ++nondeterministic;
        } catch (const std::exception& e) {
            if (first.empty()) first = e.what();
            ++bad;
        }
    }
    for (int trial = 0; trial < 3000; ++trial) {
        const auto c = props::random_case(rng, 10, 2);
        ++oracle_cases;
        if (!(run(c.jobs, c.cfg) == oracle::simulate(c.jobs, props::oracle_setup(c)))) ++oracle_mismatch;
    }
    out.check(10, "property suite (1000 random workloads) and oracle equivalence",
              bad == 0 && nondeterministic == 0 && oracle_mismatch == 0,
              std::to_string(bad) + " invariant failures, " + std::to_string(nondeterministic) +
                  " nondeterministic, " + std::to_string(oracle_mismatch) + "/" + std::to_string(oracle_cases) +
                  " oracle mismatches" + (first.empty() ? "" : "; first: " + first));
}

void generator_criterion(const Harness& h, Reporter& out)
{
    const auto base = h.spec();
    const std::vector<std::pair<std::string, TruncNormalSpec>> specs{
        {"TE duration", base.te.duration}, {"BE duration", base.be.duration}, {"BE gpu", base.be.gpu},
        {"GP", base.gp_spec()},           {"GP x8", base.gp.scaled(8.0)}};
    bool ok = true;
    std::string d;
    Rng rng(mix_seed(base.seed, 0xacce55));
    for (const auto& [name, s] : specs) {
        double sum = 0.0;
        bool in_bounds = true;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const double x = sample_trunc_normal(s, rng);
            in_bounds = in_bounds && x >= s.lower && x <= s.upper;
            sum += x;
        }
        const double rel = std::abs(sum / n / truncated_mean(s) - 1.0);
        ok = ok && in_bounds && rel <= 0.01;
        d += name + " " + fmt(100 * rel) + "%" + (in_bounds ? "" : " OUT OF BOUNDS") + "; ";
    }
    for (double target : {1.0, 2.0}) {
        auto s = base;
        s.load_model = LoadModel::Offered;
        s.target_load = target;
        const auto jobs = generate(s);
        const double load = offered_load(jobs, s.node_count, s.node_capacity);
        ok = ok && std::abs(load / target - 1.0) <= 0.05;
        d += "offered_load(target " + fmt(target) + ") " + fmt(load) + "; ";
    }
    out.check(11, "generator statistics", ok, d);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria runner"};
    std::string profile = "reduced";
    std::uint64_t seed = 1;
    app.add_option("--profile", profile, "reduced or full")->check(CLI::IsMember({"reduced", "full"}));
    app.add_option("--seed", seed, "Workload seed");
    CLI11_PARSE(app, argc, argv);

    const Profile p = profile == "full" ? Profile{"full", std::size_t{1} << 16, 84, true}
                                        : Profile{"reduced", std::size_t{1} << 12, 12, false};
    std::printf("profile %s: %zu jobs, %zu nodes, workload seed %llu\n", p.name.c_str(), p.jobs, p.nodes,
                static_cast<unsigned long long>(seed));
    const auto t0 = std::chrono::steady_clock::now();
    Harness h(p, seed);
    Reporter out;
    try {
        core_criteria(h, out);
        if (p.full) {
            sweep_criteria(h, out);
            property_criterion(out);
            generator_criterion(h, out);
        }
    } catch (const std::exception& e) {
        std::printf("error: %s\n", e.what());
        return 2;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d criteria failed; %.1f s\n", out.failed(), secs);
    return out.failed() == 0 ? 0 : 1;
}
