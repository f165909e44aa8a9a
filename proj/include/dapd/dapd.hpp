#pragma once

// Umbrella header: the whole library in one include.

#include "dapd/analysis.hpp"
#include "dapd/cli.hpp"
#include "dapd/config.hpp"
#include "dapd/errors.hpp"
#include "dapd/oracle.hpp"
#include "dapd/problem.hpp"
#include "dapd/runner.hpp"
#include "dapd/solver.hpp"
#include "dapd/topology.hpp"
#include "dapd/trace_csv.hpp"
