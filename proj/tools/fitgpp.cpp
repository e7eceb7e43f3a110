// Command-line front end: generate, simulate, sweep, report.

#include "fitgpp/config.hpp"
#include "fitgpp/engine.hpp"
#include "fitgpp/io.hpp"
#include "fitgpp/metrics.hpp"
#include "fitgpp/workload.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace fitgpp;

namespace {

enum Exit : int { kOk = 0, kConfigError = 1, kRuntimeError = 2, kTruncated = 3 };

struct Options {
    std::string config;
    std::string out;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    std::string policy;
    std::string report_dir;
};

/// Runs task(i) for i in [0, n) on up to `workers` threads. Stops handing out
/// work after the first failure; returns the index and message of that failure.
std::optional<std::pair<std::size_t, std::string>> run_pool(std::size_t n, std::size_t workers,
                                                            const std::function<void(std::size_t)>& task)
{
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::optional<std::pair<std::size_t, std::string>> first_error;
    std::mutex mu;
    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                task(i);
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                if (!first_error || i < first_error->first) first_error = {i, e.what()};
                failed = true;
            }
        }
    };
    const std::size_t count = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    std::vector<std::jthread> threads;
    for (std::size_t t = 1; t < count; ++t) threads.emplace_back(worker);
    worker();
    threads.clear();
    return first_error;
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

ExperimentConfig load(const Options& opt)
{
    if (opt.config.empty()) throw ConfigError("--config", "is required for this command");
    auto cfg = load_config(opt.config);
    if (opt.seed) cfg.workload.seed = *opt.seed;
    if (!opt.policy.empty()) {
        std::vector<std::string> wanted;
        std::string item;
        for (char c : opt.policy + ",") {
            if (c == ',') {
                if (!item.empty()) wanted.push_back(lower(item));
                item.clear();
            } else {
                item += c;
            }
        }
        std::erase_if(cfg.policies, [&](const PolicyEntry& e) {
            return std::find(wanted.begin(), wanted.end(), lower(e.label)) == wanted.end() &&
                   std::find(wanted.begin(), wanted.end(), lower(std::string(to_string(e.policy.kind)))) ==
                       wanted.end();
        });
        if (cfg.policies.empty()) throw ConfigError("--policy", "matches no configured policy");
    }
    if (cfg.sim.node_count != cfg.workload.node_count) throw ConfigError("simulation.node_count", "inconsistent");
    return cfg;
}

fs::path out_dir(const Options& opt, const ExperimentConfig& cfg)
{
    return opt.out.empty() ? fs::path(cfg.output_dir) / cfg.experiment : fs::path(opt.out);
}

std::vector<Job> workload_for(const ExperimentConfig& cfg, const WorkloadSpec& spec)
{
    if (cfg.trace) return load_trace(*cfg.trace, {spec.gp_spec(), spec.seed});
    return generate(spec);
}

struct Point {
    std::string stem;
    std::string row_label;
    std::string policy_label;
    std::optional<std::string> axis;
    std::optional<std::string> value;
    PolicyConfig policy;
    std::size_t workload = 0;
};

std::string value_text(double v)
{
    return detail::format_double(v);
}

std::string value_text(const std::optional<int>& p)
{
    return p ? std::to_string(*p) : "inf";
}

/// Simulates every point, writes per-run files and the manifest, and renders
/// the comparison report. Returns the exit code.
int execute(const fs::path& dir, const std::string& experiment, bool cross_workload,
            const std::vector<std::vector<Job>>& workloads, const std::vector<Point>& points, const SimConfig& base,
            std::size_t jobs)
{
    fs::create_directories(dir);
    std::vector<std::optional<bool>> truncated(points.size());
    const auto error = run_pool(points.size(), jobs, [&](std::size_t i) {
        const auto& p = points[i];
        SimConfig sc = base;
        sc.policy = p.policy;
        const auto result = run(workloads[p.workload], sc);
        write_run_files(dir, p.stem, result, summarize(result, p.row_label));
        truncated[i] = result.truncated;
    });

    Manifest m;
    m.experiment = experiment;
    m.cross_workload = cross_workload;
    m.complete = !error;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const bool done = truncated[i].has_value();
        if (!done && !(error && error->first == i)) continue;
        const auto& p = points[i];
        Manifest::Entry e{p.stem, p.policy_label, p.axis, p.value, p.policy.rng_seed, done, {}};
        if (!done) e.error = error->second;
        m.runs.push_back(std::move(e));
    }
    write_manifest(dir, m);
    if (error) {
        std::cerr << "error: run '" << points[error->first].stem << "' failed: " << error->second << "\n"
                  << "partial results and manifest kept in " << dir.string() << "\n";
        return kRuntimeError;
    }

    const auto report = render_report(dir);
    std::cout << dir.string() << "\n" << slowdown_table_csv(report);
    const bool any_truncated = std::any_of(truncated.begin(), truncated.end(), [](const auto& t) { return *t; });
    if (any_truncated) {
        std::cerr << "warning: at least one simulation hit the horizon; results are truncated\n";
        return kTruncated;
    }
    return kOk;
}

int cmd_generate(const Options& opt)
{
    const auto cfg = load(opt);
    if (cfg.trace) throw ConfigError("workload.trace", "generate needs a synthetic workload, not a trace");
    const auto& spec = cfg.workload;
    double lambda = 0.0;
    std::optional<double> in_system;
    if (spec.load_model == LoadModel::Offered) {
        lambda = arrival_rate(spec);
    } else {
        const auto cal = calibrate_arrival_rate(spec);
        lambda = cal.lambda;
        in_system = cal.achieved_load;
    }
    const auto jobs = generate_at_rate(spec, lambda);
    const auto dir = out_dir(opt, cfg);
    fs::create_directories(dir);
    const auto path = dir / "workload.csv";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_trace(out, jobs);
    out.close();

    std::cout << "wrote " << jobs.size() << " jobs to " << path.string() << "\n"
              << "lambda_per_min " << detail::format_double(lambda) << "\n"
              << "offered_load " << detail::format_double(offered_load(jobs, spec.node_count, spec.node_capacity))
              << "\n";
    if (in_system) std::cout << "fifo_in_system_load " << detail::format_double(*in_system) << "\n";
    return kOk;
}

int cmd_simulate(const Options& opt)
{
    const auto cfg = load(opt);
    std::vector<std::vector<Job>> workloads{workload_for(cfg, cfg.workload)};
    std::vector<Point> points;
    for (const auto& e : cfg.policies) {
        for (auto seed : e.seeds) {
            PolicyConfig pc = e.policy;
            pc.rng_seed = seed;
            points.push_back({e.label + "_seed=" + std::to_string(seed), e.label, e.label, std::nullopt, std::nullopt,
                              pc, 0});
        }
    }
    return execute(out_dir(opt, cfg), cfg.experiment, false, workloads, points, cfg.sim, opt.jobs);
}

int cmd_sweep(const Options& opt)
{
    const auto cfg = load(opt);
    if (cfg.sweep.empty()) throw ConfigError("sweep", "no sweep axes configured");
    if (cfg.trace && (!cfg.sweep.te_fraction.empty() || !cfg.sweep.gp_scale.empty())) {
        throw ConfigError("sweep", "te_fraction and gp_scale axes need a synthetic workload");
    }
    const auto root = out_dir(opt, cfg);
    std::vector<const PolicyEntry*> fitgpp;
    for (const auto& e : cfg.policies) {
        if (e.policy.kind == PolicyKind::FitGpp) fitgpp.push_back(&e);
    }
    if ((!cfg.sweep.s.empty() || !cfg.sweep.P.empty()) && fitgpp.empty()) {
        throw ConfigError("sweep", "s and P axes need a FitGpp policy");
    }

    auto add_points = [](std::vector<Point>& points, const PolicyEntry& e, const std::string& axis,
                         const std::string& value, PolicyConfig pc, std::size_t workload) {
        const std::string row = e.label + "_" + axis + "=" + value;
        for (auto seed : e.seeds) {
            pc.rng_seed = seed;
            const std::string stem = e.seeds.size() > 1 ? row + "_seed=" + std::to_string(seed) : row;
            points.push_back({stem, row, e.label, axis, value, pc, workload});
        }
    };

    int code = kOk;
    auto merge = [&](int c) {
        if (c == kRuntimeError || code == kRuntimeError) {
            code = kRuntimeError;
        } else {
            code = std::max(code, c);
        }
    };

    if (!cfg.sweep.s.empty() || !cfg.sweep.P.empty()) {
        std::vector<std::vector<Job>> base{workload_for(cfg, cfg.workload)};
        if (!cfg.sweep.s.empty()) {
            std::vector<Point> points;
            for (const auto* e : fitgpp) {
                for (double s : cfg.sweep.s) {
                    PolicyConfig pc = e->policy;
                    pc.s = s;
                    add_points(points, *e, "s", value_text(s), pc, 0);
                }
            }
            merge(execute(root / "sweep_s", cfg.experiment, false, base, points, cfg.sim, opt.jobs));
        }
        if (!cfg.sweep.P.empty() && code != kRuntimeError) {
            std::vector<Point> points;
            for (const auto* e : fitgpp) {
                for (const auto& P : cfg.sweep.P) {
                    PolicyConfig pc = e->policy;
                    pc.max_preemptions = P;
                    add_points(points, *e, "P", value_text(P), pc, 0);
                }
            }
            merge(execute(root / "sweep_P", cfg.experiment, false, base, points, cfg.sim, opt.jobs));
        }
    }

    auto workload_axis = [&](const std::string& axis, const std::vector<double>& values,
                             void (*apply)(WorkloadSpec&, double)) {
        std::vector<std::vector<Job>> workloads(values.size());
        const auto err = run_pool(values.size(), opt.jobs, [&](std::size_t i) {
            WorkloadSpec spec = cfg.workload;
            apply(spec, values[i]);
            workloads[i] = generate(spec);
        });
        if (err) throw std::runtime_error("generating workload for " + axis + "=" + value_text(values[err->first]) +
                                          ": " + err->second);
        std::vector<Point> points;
        for (std::size_t i = 0; i < values.size(); ++i) {
            for (const auto& e : cfg.policies) add_points(points, e, axis, value_text(values[i]), e.policy, i);
        }
        merge(execute(root / ("sweep_" + axis), cfg.experiment, true, workloads, points, cfg.sim, opt.jobs));
    };
    if (!cfg.sweep.te_fraction.empty() && code != kRuntimeError) {
        workload_axis("te_fraction", cfg.sweep.te_fraction, [](WorkloadSpec& w, double v) { w.te_fraction = v; });
    }
    if (!cfg.sweep.gp_scale.empty() && code != kRuntimeError) {
        workload_axis("gp_scale", cfg.sweep.gp_scale, [](WorkloadSpec& w, double v) { w.gp_scale = v; });
    }
    return code;
}

int cmd_report(const Options& opt)
{
    fs::path root = opt.report_dir;
    if (root.empty()) {
        if (!opt.out.empty()) {
            root = opt.out;
        } else if (!opt.config.empty()) {
            const auto cfg = load(opt);
            root = fs::path(cfg.output_dir) / cfg.experiment;
        } else {
            throw ConfigError("dir", "give a result directory, --out, or --config");
        }
    }
    if (!fs::is_directory(root)) throw ResultFileError(root, "not a directory");

    std::vector<fs::path> dirs;
    if (fs::exists(root / "manifest.json")) dirs.push_back(root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw ResultFileError(root / "manifest.json", "missing");
    for (const auto& d : dirs) {
        const auto report = render_report(d);
        std::cout << d.string() << "\n" << slowdown_table_csv(report);
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cluster preemption simulator"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config, "Experiment config (JSON)");
        sub->add_option("--out", opt.out, "Output directory (default: <output_dir>/<experiment>)");
        sub->add_option("--jobs", opt.jobs, "Parallel simulations")->check(CLI::PositiveNumber);
        sub->add_option("--seed", opt.seed, "Override the workload seed");
        sub->add_option("--policy", opt.policy, "Comma-separated policy labels or names to run");
    };
    auto* gen = app.add_subcommand("generate", "Write a synthetic workload trace");
    auto* sim = app.add_subcommand("simulate", "Run every configured policy on one workload");
    auto* sweep = app.add_subcommand("sweep", "Run the configured parameter sweeps");
    auto* report = app.add_subcommand("report", "Re-render tables from stored results");
    for (auto* sub : {gen, sim, sweep, report}) add_common(sub);
    report->add_option("dir", opt.report_dir, "Result directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        if (*gen) return cmd_generate(opt);
        if (*sim) return cmd_simulate(opt);
        if (*sweep) return cmd_sweep(opt);
        return cmd_report(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}
