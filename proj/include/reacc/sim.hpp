#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reacc/condensed.hpp"
#include "reacc/conic.hpp"
#include "reacc/cycle.hpp"
#include "reacc/powertrain.hpp"
#include "reacc/robust_mpc.hpp"
#include "reacc/vehicle.hpp"

namespace reacc {

enum class ControllerKind { kReacc, kNominal, kCdfs };
enum class DisturbancePolicy { kUniform, kAdversarial, kZero };

std::string to_string(ControllerKind kind);
std::string to_string(DisturbancePolicy policy);
ControllerKind parse_controller(const std::string& name);
DisturbancePolicy parse_policy(const std::string& name);

// Energy-disturbance interval used when the scenario does not set one [N].
constexpr double kDefaultDeLo = -146.28;
constexpr double kDefaultDeHi = 148.20;

// Weights swapped in for the last `steps` control intervals of the route.
struct ClosingPhase {
  int steps = 0;
  ControllerWeights weights;
};

struct ScenarioConfig {
  int horizon = 11;
  double ds = 3.0;
  ControllerWeights weights;
  DisturbancePolicy policy = DisturbancePolicy::kUniform;
  std::uint64_t seed = 1;
  ControllerKind controller = ControllerKind::kReacc;
  double v0 = 0.9108;
  double dt0 = 3.0;
  double gap_ref = 3.0;
  // Robust controller box; unset uses [kDefaultDeLo, kDefaultDeHi] for d_E and the cycle's
  // realised leader range for d_t.
  std::optional<DisturbanceBounds> box;
  std::optional<ClosingPhase> closing;
  ZetaEnergy zeta_energy = ZetaEnergy::kWorstCaseLow;
  conic::SolverOptions solver;
  VehicleParams vehicle;
  PowertrainFit powertrain;

  // Throws std::invalid_argument on N < 1, ds <= 0, v0 < v_min or a negative closing length.
  void validate() const;
};

// Ground truth applied by the plant at one step.
struct StepTruth {
  ResistanceCoeffs coeffs;
  double theta_true = 0.0;
  double v_lead_true = 0.0;
};

// Per-step truth for the whole cycle, a pure function of (cycle, policy, seed):
// uniform draws i.i.d. coefficients in their bounds with the cycle's slope and leader;
// adversarial takes the lowest coefficients and theta_nom + slope_mismatch_lo, which maximises
// d_E; zero takes nominal coefficients, theta_nom and the predicted leader.
std::vector<StepTruth> disturbance_sequence(const DrivingCycle& cycle,
                                            const ScenarioConfig& scenario);

// Box handed to the robust controller.
DisturbanceBounds resolve_box(const DrivingCycle& cycle, const ScenarioConfig& scenario);

struct CdfsCommand {
  double F_w = 0.0;
  bool clipped = false;
};

// Force that brings the nominal model to the leader's next speed in one step.
CdfsCommand cdfs_controller(const EgoState& measurement, const RoadSample& here,
                            double next_leader_speed, const VehicleParams& params, double ds);

struct TraceStep {
  double s = 0.0;
  double v = 0.0;
  double E = 0.0;
  double dt_gap = 0.0;
  double E_max = 0.0;
  double F_w = 0.0;
  double F_t = 0.0;
  double F_m = 0.0;
  double d_E = 0.0;
  double d_t = 0.0;
  double f_d = 0.0;
  double f_r = 0.0;
  double theta_true = 0.0;
  double v_lead_true = 0.0;
  double solve_time = 0.0;
  bool feasible = true;   // optimal solve (and verified certificate for the robust controller)
  bool fallback = false;  // previous command held
  bool clipped = false;   // baseline command saturated
  double zeta_slack = 0.0;
  bool floored = false;   // plant energy clamped at E_min after this step
  std::string note;       // solver message on fallback steps
};

struct TerminalState {
  double s = 0.0;
  double v = 0.0;
  double E = 0.0;
  double dt_gap = 0.0;
  double E_max = 0.0;
};

struct SimulationTrace {
  ControllerKind controller = ControllerKind::kReacc;
  DisturbancePolicy policy = DisturbancePolicy::kUniform;
  std::uint64_t seed = 0;
  int horizon = 0;
  double ds = 0.0;
  std::vector<TraceStep> steps;  // one per control interval
  TerminalState terminal;        // state at the last sample reached
  bool aborted = false;
  std::string diagnostic;
};

SimulationTrace run_closed_loop(const DrivingCycle& cycle, const ScenarioConfig& scenario);

}  // namespace reacc
