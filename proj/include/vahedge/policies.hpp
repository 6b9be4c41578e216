#pragma once

#include "vahedge/delta.hpp"
#include "vahedge/env.hpp"
#include "vahedge/neuralnet.hpp"

namespace vahedge {

/// Deterministic network policy: the Gaussian mean. Copies the weights.
Policy make_network_policy(NetworkParams params);

/// Holds the hedger's Delta for the cohort, expressed in the env's action unit.
Policy make_delta_policy(DeltaHedger hedger);

/// Unhedged baseline.
Policy make_zero_policy();

}  // namespace vahedge
