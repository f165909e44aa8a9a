#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dapd/errors.hpp"
#include "dapd/problem.hpp"
#include "dapd/solver.hpp"
#include "dapd/topology.hpp"

namespace dapd {

using json = nlohmann::json;

struct ProblemConfig {
    std::string kind = "quadratic";
    int num_agents = 0;
    int dim = 0;  // quadratic instance uses d_i = n = m = dim
    std::uint64_t seed = 0;
    std::pair<double, double> a_range{1.0, 3.0};
    std::pair<double, double> b_range{1.0, 2.0};
    std::optional<std::vector<VectorXd>> a_override;
    std::optional<std::vector<VectorXd>> b_override;
};

struct NetworkConfig {
    std::string topology;  // ring | exponential | random | custom
    int num_agents = 0;
    double edge_prob = 0.0;
    std::uint64_t seed = 0;
    std::optional<MatrixXd> weights;  // custom only
};

struct RunConfig {
    long max_iters = 1000;
    long trace_every = 1;
    int threads = 1;
    std::optional<double> rel_err_target;
    std::optional<double> kkt_target;
};

struct ExperimentConfig {
    ProblemConfig problem;
    NetworkConfig network;
    StepSizes steps;
    RunConfig run;
    bool lyapunov = false;       // step the dense twin and emit eps/margin columns
    bool use_reference = true;   // solve the small-scale ground truth for rel_err
    std::string csv_path;
    std::string x0_rule = "zeros";
    std::string lambda0_rule = "zeros";
    std::optional<VectorXd> x0_explicit;
    std::optional<VectorXd> lambda0_explicit;
    std::uint64_t hash = 0;
};

/// 64-bit FNV-1a over the canonical (sorted-key) JSON dump. Stable across
/// platforms; used to stamp traces with the exact configuration.
inline std::uint64_t config_hash(const json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

inline const json& require_field(const json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end()) {
        std::ostringstream os;
        os << "missing field '" << key << "' in " << where;
        throw ConfigError(os.str());
    }
    return *it;
}

inline std::vector<VectorXd> parse_vector_list(const json& j, int count, int dim, const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != count) {
        std::ostringstream os;
        os << what << " override must be an array of " << count << " vectors";
        throw ConfigError(os.str());
    }
    std::vector<VectorXd> out;
    out.reserve(count);
    for (const auto& row : j) {
        if (!row.is_array() || static_cast<int>(row.size()) != dim) {
            std::ostringstream os;
            os << what << " override rows must have length " << dim;
            throw ConfigError(os.str());
        }
        VectorXd v(dim);
        for (int c = 0; c < dim; ++c) v[c] = row[c].get<double>();
        out.push_back(std::move(v));
    }
    return out;
}

inline VectorXd parse_flat_vector(const json& j, const char* what) {
    if (!j.is_array()) throw ConfigError(std::string(what) + " must be a flat array of numbers");
    VectorXd v(static_cast<long>(j.size()));
    for (long c = 0; c < v.size(); ++c) v[c] = j[static_cast<std::size_t>(c)].get<double>();
    return v;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    try {
        const json& jp = detail::require_field(j, "problem", "config root");
        cfg.problem.kind = jp.value("kind", std::string("quadratic"));
        if (cfg.problem.kind != "quadratic")
            throw ConfigError("unknown problem kind '" + cfg.problem.kind + "' (supported: quadratic)");
        cfg.problem.num_agents = detail::require_field(jp, "N", "problem").get<int>();
        cfg.problem.dim = detail::require_field(jp, "n", "problem").get<int>();
        cfg.problem.seed = jp.value("seed", std::uint64_t{0});
        if (cfg.problem.num_agents < 2) throw ConfigError("problem.N must be at least 2");
        if (cfg.problem.dim < 1) throw ConfigError("problem.n must be at least 1");
        if (jp.contains("a_range")) {
            auto r = jp["a_range"];
            cfg.problem.a_range = {r.at(0).get<double>(), r.at(1).get<double>()};
        }
        if (jp.contains("b_range")) {
            auto r = jp["b_range"];
            cfg.problem.b_range = {r.at(0).get<double>(), r.at(1).get<double>()};
        }
        if (jp.contains("a"))
            cfg.problem.a_override =
                detail::parse_vector_list(jp["a"], cfg.problem.num_agents, cfg.problem.dim, "a");
        if (jp.contains("b"))
            cfg.problem.b_override =
                detail::parse_vector_list(jp["b"], cfg.problem.num_agents, cfg.problem.dim, "b");

        const json& jn = detail::require_field(j, "network", "config root");
        cfg.network.topology = detail::require_field(jn, "topology", "network").get<std::string>();
        cfg.network.num_agents = jn.value("N", cfg.problem.num_agents);
        if (cfg.network.num_agents != cfg.problem.num_agents)
            throw ConfigError("network.N must match problem.N");
        if (cfg.network.topology == "random") {
            cfg.network.edge_prob = detail::require_field(jn, "edge_prob", "network").get<double>();
            cfg.network.seed = jn.value("seed", std::uint64_t{0});
        } else if (cfg.network.topology == "custom") {
            const json& jw = detail::require_field(jn, "W", "network");
            int n = cfg.network.num_agents;
            if (!jw.is_array() || static_cast<int>(jw.size()) != n * n)
                throw ConfigError("network.W must be a row-major array of N*N weights");
            MatrixXd W(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) W(r, c) = jw[static_cast<std::size_t>(r * n + c)].get<double>();
            cfg.network.weights = std::move(W);
        } else if (cfg.network.topology != "ring" && cfg.network.topology != "exponential") {
            throw ConfigError("unknown topology '" + cfg.network.topology +
                              "' (supported: ring, exponential, random, custom)");
        }

        const json& js = detail::require_field(j, "steps", "config root");
        cfg.steps.alpha = detail::require_field(js, "alpha", "steps").get<double>();
        cfg.steps.beta = detail::require_field(js, "beta", "steps").get<double>();
        cfg.steps.gamma = detail::require_field(js, "gamma", "steps").get<double>();
        cfg.steps.validate();

        if (j.contains("run")) {
            const json& jr = j["run"];
            cfg.run.max_iters = jr.value("max_iters", cfg.run.max_iters);
            cfg.run.trace_every = jr.value("trace_every", cfg.run.trace_every);
            cfg.run.threads = jr.value("threads", cfg.run.threads);
            if (jr.contains("rel_err_target")) cfg.run.rel_err_target = jr["rel_err_target"].get<double>();
            if (jr.contains("kkt_target")) cfg.run.kkt_target = jr["kkt_target"].get<double>();
        }
        if (cfg.run.max_iters < 1) throw ConfigError("run.max_iters must be at least 1");
        if (cfg.run.trace_every < 1) throw ConfigError("run.trace_every must be at least 1");
        if (cfg.run.threads < 1) throw ConfigError("run.threads must be at least 1");

        if (j.contains("init")) {
            const json& ji = j["init"];
            if (ji.contains("x0")) {
                if (ji["x0"].is_string()) {
                    cfg.x0_rule = ji["x0"].get<std::string>();
                    if (cfg.x0_rule != "zeros") throw ConfigError("init.x0 rule must be 'zeros' or an array");
                } else {
                    cfg.x0_rule = "explicit";
                    cfg.x0_explicit = detail::parse_flat_vector(ji["x0"], "init.x0");
                }
            }
            if (ji.contains("lambda0")) {
                if (ji["lambda0"].is_string()) {
                    cfg.lambda0_rule = ji["lambda0"].get<std::string>();
                    if (cfg.lambda0_rule != "zeros")
                        throw ConfigError("init.lambda0 rule must be 'zeros' or an array");
                } else {
                    cfg.lambda0_rule = "explicit";
                    cfg.lambda0_explicit = detail::parse_flat_vector(ji["lambda0"], "init.lambda0");
                }
            }
        }

        if (j.contains("diagnostics")) {
            const json& jd = j["diagnostics"];
            cfg.lyapunov = jd.value("lyapunov", false);
            cfg.use_reference = jd.value("reference", true);
        }
        if (j.contains("output")) cfg.csv_path = j["output"].value("csv", std::string());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    // The hash identifies the experiment, not its execution: thread count,
    // output paths, and diagnostic toggles do not change the trajectory, so
    // they stay out of the digest and parallel runs stamp identical traces.
    json canon;
    canon["problem"] = j.at("problem");
    canon["network"] = j.at("network");
    canon["steps"] = j.at("steps");
    if (j.contains("init")) canon["init"] = j.at("init");
    canon["run"] = {{"max_iters", cfg.run.max_iters}, {"trace_every", cfg.run.trace_every}};
    if (cfg.run.rel_err_target) canon["run"]["rel_err_target"] = *cfg.run.rel_err_target;
    if (cfg.run.kkt_target) canon["run"]["kkt_target"] = *cfg.run.kkt_target;
    cfg.hash = config_hash(canon);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline QuadraticInstance build_instance(const ProblemConfig& pc) {
    QuadraticInstance q = QuadraticInstance::generate(pc.num_agents, pc.dim, pc.seed, pc.a_range,
                                                      pc.b_range);
    if (pc.a_override) q.a = *pc.a_override;
    if (pc.b_override) q.b = *pc.b_override;
    return q;
}

inline MixingNetwork build_network(const NetworkConfig& nc) {
    if (nc.topology == "ring") return ring_network(nc.num_agents);
    if (nc.topology == "exponential") return exponential_network(nc.num_agents);
    if (nc.topology == "random") return random_network(nc.num_agents, nc.edge_prob, nc.seed);
    if (nc.topology == "custom") return custom_network(*nc.weights);
    throw ConfigError("unknown topology '" + nc.topology + "'");
}

/// Cross-module precondition that needs both the steps and the network:
/// the auxiliary dual step must stay below the inverse smallest nonzero
/// mixing eigenvalue or the dual error recursion has no contraction.
inline void validate_steps_against_network(const StepSizes& st, const MixingNetwork& net) {
    double bound = 1.0 / net.spectral().sigma_min_sq;
    if (!(st.gamma < bound)) {
        std::ostringstream os;
        os << "gamma = " << st.gamma << " must be below 1/sigma_min^2(B) = " << bound
           << " (dual step exceeds the mixing spectral bound)";
        throw ConfigError(os.str());
    }
}

}  // namespace dapd
