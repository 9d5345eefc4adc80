#include "reacc/presets.hpp"

namespace reacc {

SynthOptions acceptance_synth_options() {
  SynthOptions o;
  o.bend_kappa_max = 0.015;
  o.leader_swing_share = 0.2;
  return o;
}

DrivingCycle acceptance_cycle(const VehicleParams& params) {
  return synth_cycle(kAcceptanceCycleSeed, kAcceptanceCycleLength, params,
                     acceptance_synth_options());
}

ScenarioConfig acceptance_scenario(const DrivingCycle& cycle) {
  ScenarioConfig sc;
  sc.horizon = 11;
  sc.ds = cycle.profile.ds;
  sc.v0 = cycle.v_lead_nom.front();
  sc.dt0 = 3.0;
  sc.gap_ref = 3.0;
  sc.weights.W_E = 1e-10;
  sc.weights.W_F = 1e-2;
  sc.weights.W_zeta = 1e2;
  sc.weights.W_dt = 15.0;
  ClosingPhase closing;
  closing.steps = sc.horizon;
  closing.weights = sc.weights;
  closing.weights.W_E = 1e-6;
  sc.closing = closing;
  return sc;
}

}  // namespace reacc
