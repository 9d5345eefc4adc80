#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "reacc/condensed.hpp"
#include "reacc/conic.hpp"

namespace reacc {

struct MpcSettings {
  int horizon = 11;
  ControllerWeights weights;
  conic::SolverOptions solver;
};

// Result of one receding-horizon step.
struct StepOutcome {
  double F_w = 0.0;       // command applied to the plant
  bool fallback = false;  // true when the solver failed and the previous command was held
  conic::SolveStatus status = conic::SolveStatus::kNumericalFailure;
  std::string message;
  double solve_time = 0.0;  // wall clock of build + solve [s]
  int horizon = 0;
  double objective = 0.0;   // optimal cost (nominal) or cost bound (robust)
  double zeta_slack = 0.0;  // max_k zeta(k) - (2E(k)/m)^(-1/2)
  Eigen::VectorXd u;        // planned input stack
  Eigen::VectorXd states;   // nominal predicted state stack
};

struct ZetaCone {
  int slack = -1;  // w with w^2 <= 2E/m and zeta w >= 1
  conic::BlockHandle energy_block;
  conic::BlockHandle product_block;
};

// zeta >= (2E/m)^(-1/2) as two 2x2 PSD blocks.
ZetaCone encode_zeta_cone(conic::ConicProgram& program, int zeta_var, const conic::AffineExpr& energy,
                          double mass, const std::string& tag);

// Program layout shared with callers that read the solution back.
struct NominalProgram {
  conic::ConicProgram program;
  int u_first = 0;     // 2N inputs [F_w(0), zeta(0), ...]
  int cost_bound = -1;
  std::vector<ZetaCone> cones;
};

// min J(u, 0) over the stacked box constraints and zeta cones. Rows of the constraint stack that
// do not depend on u (measured state, absent terminal input) are checked, not imposed.
NominalProgram build_nominal_qp(const CondensedSystem& sys, double mass);

// Largest zeta(k) - (2E(k)/m)^(-1/2) over the horizon for the given energies.
double zeta_slack(const Eigen::VectorXd& u, const Eigen::VectorXd& energies, double mass);

// Previous command clipped to the wheel-force bounds.
double hold_command(double previous, const VehicleParams& params);

class NominalMpc {
 public:
  NominalMpc(VehicleParams params, PowertrainFit fit, MpcSettings settings);

  StepOutcome step(const EgoState& measurement, const HorizonWindow& window);

  void reset(double previous_command = 0.0) { previous_ = previous_command; }
  double previous_command() const { return previous_; }
  const MpcSettings& settings() const { return settings_; }
  void set_weights(const ControllerWeights& weights);

 private:
  VehicleParams params_;
  PowertrainFit fit_;
  MpcSettings settings_;
  double previous_ = 0.0;
};

}  // namespace reacc
