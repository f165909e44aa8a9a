#pragma once

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dapd/analysis.hpp"
#include "dapd/config.hpp"
#include "dapd/oracle.hpp"
#include "dapd/runner.hpp"
#include "dapd/trace_csv.hpp"

namespace dapd {

/// Exit code contract shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCertificateFailed = 1;
inline constexpr int kExitDiverged = 2;
inline constexpr int kExitConfigError = 3;

/// Pinned seeds for the reproduction scenarios, chosen once so the emitted
/// numbers are stable: the problem draw is shared across runs of a scenario,
/// and the random-graph seed is the first one whose sparse draw at
/// edge_prob = 0.05 is connected with rho in [0.95, 0.99].
inline constexpr std::uint64_t kScenarioProblemSeed = 7;
inline constexpr double kScenarioEdgeProb = 0.05;
inline constexpr std::uint64_t kScenarioGraphSeed = 0;

namespace detail {

struct BuiltExperiment {
    QuadraticInstance instance;
    AggregativeProblem problem;
    MixingNetwork network;

    BuiltExperiment(QuadraticInstance q, MixingNetwork net)
        : instance(std::move(q)), problem(instance.to_problem()), network(std::move(net)) {}
};

inline BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
    QuadraticInstance q = build_instance(cfg.problem);
    MixingNetwork net = build_network(cfg.network);
    validate_steps_against_network(cfg.steps, net);
    return BuiltExperiment(std::move(q), std::move(net));
}

inline SwarmState build_initial_state(const ExperimentConfig& cfg, const AggregativeProblem& p) {
    VectorXd x0 = VectorXd::Zero(p.total_dim());
    VectorXd lam0 = VectorXd::Zero(static_cast<long>(p.num_agents()) * p.num_constraints());
    if (cfg.x0_explicit) {
        if (cfg.x0_explicit->size() != x0.size())
            throw ConfigError("init.x0 has wrong length for the stacked decision vector");
        x0 = *cfg.x0_explicit;
    }
    if (cfg.lambda0_explicit) {
        if (cfg.lambda0_explicit->size() != lam0.size())
            throw ConfigError("init.lambda0 has wrong length for the stacked multiplier vector");
        lam0 = *cfg.lambda0_explicit;
    }
    return initial_state(p, x0, lam0);
}

inline RunTrace execute(const ExperimentConfig& cfg, const BuiltExperiment& built) {
    RunOptions opt;
    opt.stop.max_iters = cfg.run.max_iters;
    opt.stop.rel_err_target = cfg.run.rel_err_target;
    opt.stop.kkt_target = cfg.run.kkt_target;
    opt.trace_every = cfg.run.trace_every;
    opt.threads = cfg.run.threads;
    opt.config_hash = cfg.hash;
    opt.seed = cfg.problem.seed;
    if (cfg.lyapunov && !cfg.use_reference)
        throw ConfigError("diagnostics.lyapunov needs diagnostics.reference enabled");
    if (cfg.use_reference) opt.reference = solve_kkt(built.instance);
    if (cfg.lyapunov) {
        opt.track_lyapunov = true;
        opt.constants = built.instance.constants();
    }
    return run(built.problem, built.network, cfg.steps, build_initial_state(cfg, built.problem), opt);
}

/// First recorded round whose relative error is at or below the threshold,
/// or -1 if the trace never gets there.
inline long iterations_to_threshold(const RunTrace& t, double threshold) {
    for (const TraceRow& r : t.rows)
        if (r.rel_err <= threshold) return r.k;
    return -1;
}

/// DAPD_LOG=quiet silences informational output (summaries, file notices).
/// Results, reports, and errors are unaffected.
inline bool log_quiet() {
    const char* v = std::getenv("DAPD_LOG");
    return v && std::string_view(v) == "quiet";
}

inline void print_run_summary(std::ostream& out, const RunTrace& t) {
    if (log_quiet()) return;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "stop=%s iterations=%ld rel_err=%.3e kkt=(%.3e, %.3e, %.3e)\n",
                  to_string(t.stop_reason), t.iterations,
                  t.rows.empty() ? -1.0 : t.rows.back().rel_err,
                  t.rows.empty() ? -1.0 : t.rows.back().kkt_stat,
                  t.rows.empty() ? -1.0 : t.rows.back().kkt_primal,
                  t.rows.empty() ? -1.0 : t.rows.back().kkt_comp);
    out << buf;
}

}  // namespace detail

inline int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        detail::BuiltExperiment built = detail::build_experiment(cfg);
        RunTrace trace = detail::execute(cfg, built);
        if (!cfg.csv_path.empty()) {
            write_trace_csv(cfg.csv_path, trace);
            if (!detail::log_quiet()) out << "trace: " << cfg.csv_path << "\n";
        }
        detail::print_run_summary(out, trace);
        if (trace.diverged) {
            err << "diverged: " << trace.divergence_detail << "\n";
            return kExitDiverged;
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

inline int cmd_certify(const std::string& config_path, std::ostream& out, std::ostream& err) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        detail::BuiltExperiment built = detail::build_experiment(cfg);
        SmoothnessConstants consts = built.instance.constants();
        Certificate c = certify(built.problem, built.network, cfg.steps, consts);

        char buf[160];
        auto line = [&](const char* name, double value, const char* rel, double bound, bool ok) {
            std::snprintf(buf, sizeof buf, "  %-12s = %-14.6g %s %-14.6g [%s]\n", name, value, rel,
                          bound, ok ? "ok" : "FAIL");
            out << buf;
        };
        out << "certificate (rho = " << c.rho << ")\n";
        line("c1", c.c1, ">", 0.0, c.c1_positive);
        line("kappa", c.kappa, "<", 1.0, c.kappa_ok);
        line("kappa1", c.kappa1, "<", 1.0, c.kappa1_ok);
        line("kappa2", c.kappa2, "<", 1.0, c.kappa2_ok);
        line("beta", c.beta, "<", c.beta_bound, c.beta_ok);
        line("gamma", c.gamma, "<", c.gamma_bound, c.gamma_ok);
        std::snprintf(buf, sizeof buf, "  %-12s = %.9f\n", "tau", c.tau);
        out << buf;
        out << "result: " << (c.passed ? "PASS" : ("FAIL (" + c.failure + ")")) << "\n";

        if (!cfg.csv_path.empty()) {
            std::string csv = "name,value,bound,ok\n";
            auto row = [&](const char* name, double value, double bound, bool ok) {
                std::snprintf(buf, sizeof buf, "%s,%.12e,%.12e,%d\n", name, value, bound, ok ? 1 : 0);
                csv += buf;
            };
            row("c1", c.c1, 0.0, c.c1_positive);
            row("kappa", c.kappa, 1.0, c.kappa_ok);
            row("kappa1", c.kappa1, 1.0, c.kappa1_ok);
            row("kappa2", c.kappa2, 1.0, c.kappa2_ok);
            row("beta", c.beta, c.beta_bound, c.beta_ok);
            row("gamma", c.gamma, c.gamma_bound, c.gamma_ok);
            row("tau", c.tau, 1.0, c.tau > 0.0 && c.tau < 1.0);
            // A sibling of the trace path, so certifying a config never
            // clobbers a trajectory written by `run` on the same config.
            std::filesystem::path report = cfg.csv_path;
            report.replace_extension(".certificate.csv");
            write_file_atomic(report.string(), csv);
            out << "report: " << report.string() << "\n";
        }
        return c.passed ? kExitOk : kExitCertificateFailed;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

namespace detail {

struct ScenarioRun {
    std::string label;
    MixingNetwork network;
    StepSizes steps;
    long horizon;
};

inline int run_scenario(const std::string& scenario, const std::string& out_dir, std::ostream& out,
                        std::ostream& err) {
    namespace fs = std::filesystem;
    const int N = 60, n = 5;
    QuadraticInstance q = QuadraticInstance::generate(N, n, kScenarioProblemSeed);
    AggregativeProblem p = q.to_problem();
    KktPoint ref = solve_kkt(q);

    std::vector<ScenarioRun> runs;
    if (scenario == "fig2") {
        MixingNetwork net = random_network(N, kScenarioEdgeProb, kScenarioGraphSeed);
        runs.push_back({"alpha_0.09", net, {0.09, 0.4, 0.1}, 3000});
        runs.push_back({"alpha_0.02", net, {0.02, 0.4, 0.1}, 3000});
    } else if (scenario == "fig3") {
        runs.push_back({"exponential", exponential_network(N), {0.09, 0.4, 0.1}, 6000});
        runs.push_back({"random", random_network(N, kScenarioEdgeProb, kScenarioGraphSeed),
                        {0.09, 0.4, 0.1}, 6000});
        runs.push_back({"ring", ring_network(N), {0.09, 0.4, 0.1}, 6000});
    } else {
        throw ConfigError("unknown scenario '" + scenario + "' (supported: fig2, fig3)");
    }

    std::string summary = "scenario,run,rho,iterations_to_1e3\n";
    char buf[160];
    for (const ScenarioRun& sr : runs) {
        validate_steps_against_network(sr.steps, sr.network);
        RunOptions opt;
        opt.stop.max_iters = sr.horizon;
        opt.trace_every = 1;
        opt.reference = ref;
        opt.seed = kScenarioProblemSeed;
        json meta = {{"scenario", scenario}, {"run", sr.label}, {"seed", kScenarioProblemSeed}};
        opt.config_hash = config_hash(meta);
        RunTrace trace = run(p, sr.network, sr.steps, opt);
        fs::path csv = fs::path(out_dir) / (scenario + "_" + sr.label + ".csv");
        write_trace_csv(csv.string(), trace);
        long iters = iterations_to_threshold(trace, 1e-3);
        std::snprintf(buf, sizeof buf, "%s,%s,%.12e,%ld\n", scenario.c_str(), sr.label.c_str(),
                      sr.network.spectral().rho, iters);
        summary += buf;
        if (!log_quiet())
            out << scenario << "/" << sr.label << ": rho=" << sr.network.spectral().rho
                << " iters_to_1e-3=" << iters << " -> " << csv.string() << "\n";
        if (trace.diverged) {
            err << "diverged: " << trace.divergence_detail << "\n";
            return kExitDiverged;
        }
    }
    fs::path spath = fs::path(out_dir) / (scenario + "_summary.csv");
    write_file_atomic(spath.string(), summary);
    if (!log_quiet()) out << "summary: " << spath.string() << "\n";
    return kExitOk;
}

}  // namespace detail

inline int cmd_reproduce(const std::string& scenario, const std::string& out_dir, std::ostream& out,
                         std::ostream& err) {
    try {
        return detail::run_scenario(scenario, out_dir, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

}  // namespace dapd
