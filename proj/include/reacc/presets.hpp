#pragma once

#include "reacc/cycle.hpp"
#include "reacc/sim.hpp"

namespace reacc {

// Synthetic cycle used by the acceptance suite: 450 m, generator seed 7, mild bends and a
// lively leader.
constexpr std::uint64_t kAcceptanceCycleSeed = 7;
constexpr double kAcceptanceCycleLength = 450.0;

SynthOptions acceptance_synth_options();
DrivingCycle acceptance_cycle(const VehicleParams& params = {});

// REACC at N = 11 starting at the leader's speed, light energy tracking with a closing phase
// over the last horizon that pulls the ego up to its speed cap.
ScenarioConfig acceptance_scenario(const DrivingCycle& cycle);

}  // namespace reacc
