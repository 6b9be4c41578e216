#include "vahedge/policies.hpp"

#include <memory>

namespace vahedge {

Policy make_network_policy(NetworkParams params) {
  auto shared = std::make_shared<const NetworkParams>(std::move(params));
  return [shared](const EpisodeState& state, const HedgingEnv&) { return forward(*shared, state.obs).policy.mean; };
}

Policy make_delta_policy(DeltaHedger hedger) {
  return [hedger = std::move(hedger)](const EpisodeState& state, const HedgingEnv& env) {
    const auto& raw = state.raw;
    const double shares = hedger.shares(raw.k, env.time(), raw.S, raw.survivors, env.config().terms);
    return env.config().action_from_shares(shares);
  };
}

Policy make_zero_policy() {
  return [](const EpisodeState&, const HedgingEnv&) { return 0.0; };
}

}  // namespace vahedge
