#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "reacc/powertrain.hpp"
#include "reacc/sim.hpp"
#include "reacc/vehicle.hpp"

namespace reacc {

struct LossBreakdown {
  double rolling = 0.0;
  double air_drag = 0.0;
  double propulsion = 0.0;
  double regeneration = 0.0;
  double mech_braking = 0.0;

  double total() const { return rolling + air_drag + propulsion + regeneration + mech_braking; }
};

struct ViolationCounts {
  std::size_t energy_hi = 0;  // E > E_max
  std::size_t energy_lo = 0;  // E < E_min before flooring
  std::size_t gap_lo = 0;     // dt_gap < dt_min
  std::size_t gap_hi = 0;     // dt_gap > dt_max

  std::size_t total() const { return energy_hi + energy_lo + gap_lo + gap_hi; }
};

struct MetricsReport {
  std::string controller;
  std::string policy;
  std::uint64_t seed = 0;
  int horizon = 0;
  std::size_t steps = 0;
  double distance = 0.0;
  double travel_time = 0.0;
  double E_b = 0.0;  // battery energy [J]
  double rms_accel = 0.0;
  double rms_jerk = 0.0;
  LossBreakdown losses;
  double delta_kinetic = 0.0;
  double delta_potential = 0.0;
  // |E_b - (delta_kinetic + delta_potential + losses)| / |E_b|
  double conservation_residual = 0.0;
  double mean_solve_time = 0.0;
  double max_solve_time = 0.0;
  ViolationCounts violations;
  std::size_t fallback_steps = 0;
  std::size_t infeasible_steps = 0;
  std::size_t clipped_steps = 0;
  std::size_t floored_steps = 0;
  double max_zeta_slack = 0.0;
  double initial_speed = 0.0;
  double terminal_speed = 0.0;
  double max_energy_excess = 0.0;  // largest E - E_max [J], negative when never reached
  bool low_speed = false;          // some v < v_min
  bool aborted = false;
  std::string diagnostic;
};

// Metrics of a trace. E_b = sum P_b(F_t, v) ds / v; accelerations and jerks use forward
// differences with per-step time deltas ds / v(k).
MetricsReport compute_metrics(const SimulationTrace& trace, const PowertrainFit& fit,
                              const VehicleParams& params);

struct MonteCarloReport {
  std::vector<MetricsReport> runs;  // seed order
  std::size_t total_violations = 0;
  std::size_t runs_with_violations = 0;
  std::size_t total_fallbacks = 0;
  std::size_t aborted_runs = 0;
  double mean_E_b = 0.0;
  double max_zeta_slack = 0.0;
  double mean_solve_time = 0.0;
  double max_solve_time = 0.0;
};

MonteCarloReport aggregate(std::vector<MetricsReport> runs);

// Seeds scenario.seed + i for i < n_seeds, run on up to `threads` workers (0 = hardware).
MonteCarloReport monte_carlo(const DrivingCycle& cycle, const ScenarioConfig& scenario,
                             std::size_t n_seeds, unsigned threads = 0);

}  // namespace reacc
