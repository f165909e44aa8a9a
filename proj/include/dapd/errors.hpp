#pragma once

#include <stdexcept>
#include <string>

namespace dapd {

/// Bad user-supplied configuration (dimensions, ranges, schema). CLI maps this
/// to exit code 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or numerically meaningless requests (indefinite weight
/// matrices, unsolvable subsystems).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterate left the trust region (|entry| > divergence_limit or non-finite).
/// Carries the first offending agent and component for diagnosis. CLI maps this
/// to exit code 2.
struct DivergenceError : NumericError {
    DivergenceError(const std::string& what, int agent_, int component_)
        : NumericError(what), agent(agent_), component(component_) {}
    int agent;
    int component;
};

}  // namespace dapd
