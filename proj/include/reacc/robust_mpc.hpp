#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "reacc/condensed.hpp"
#include "reacc/conic.hpp"
#include "reacc/nominal_mpc.hpp"

namespace reacc {

// Disturbance components with a non-degenerate interval, in scaled units d = h * d'.
struct ScaledBox {
  std::vector<int> active;  // indices into the 2N disturbance stack
  Eigen::VectorXd scale;    // h per active component
  Eigen::VectorXd lo, hi;   // scaled bounds per active component
  Eigen::MatrixXd lift;     // 2N x active, maps d' to d

  static ScaledBox from(const CondensedSystem& sys);
  int size() const { return static_cast<int>(active.size()); }
};

// Row selection and normalization of g = fbar* - I* f (length 6(N+1)).
struct SlmiRows {
  std::vector<int> rows;   // kept stacked indices; rows free of u and d are checked, not imposed
  Eigen::VectorXd weight;  // 1 / (f_hi - f_lo) per kept row

  static SlmiRows from(const CondensedSystem& sys);
  int size() const { return static_cast<int>(rows.size()); }
};

// g(u, d) = fbar* - I* (C_f x0 + D_fc C + D_fu u + D_fd d).
Eigen::VectorXd stacked_margins(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& d);

// Variable indices for the objective bound block.
struct ObjectiveVars {
  int u_first = 0;
  int mult_first = 0;  // one multiplier per active disturbance component
  int cost_bound = -1;
};

// SDPR of J(u, d) <= cost_bound over the box with the quadratic input term moved to a Schur row.
conic::PsdBlock build_objective_lmi(const CondensedSystem& sys, const ScaledBox& box,
                                    const ObjectiveVars& vars);

struct ConstraintVars {
  int u_first = 0;
  int mult_first = 0;  // one multiplier per active disturbance component
  int mu = -1;
  int M_first = 0;     // one diagonal entry per kept row
};

// Single LMI certifying g(u, d) >= 0 for every d in the box.
conic::PsdBlock build_constraint_slmi(const CondensedSystem& sys, const ScaledBox& box,
                                      const SlmiRows& rows, const ConstraintVars& vars);

enum class ZetaEnergy { kWorstCaseLow, kNominal };

struct RobustProgram {
  conic::ConicProgram program;
  ScaledBox box;
  SlmiRows rows;
  ObjectiveVars objective_vars;
  ConstraintVars constraint_vars;
  conic::BlockHandle objective_block;
  conic::BlockHandle constraint_block;
  std::vector<ZetaCone> cones;
};

// Lowest predicted energy per step over the box (first N entries of the state stack).
Eigen::VectorXd worst_case_low_energy(const CondensedSystem& sys, const Eigen::VectorXd& u);

RobustProgram assemble_rmpc(const CondensedSystem& sys, double mass,
                            ZetaEnergy zeta_energy = ZetaEnergy::kWorstCaseLow);

struct RobustCertificate {
  double cost_bound = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd objective_multipliers;   // scaled-box units
  Eigen::VectorXd constraint_multipliers;  // scaled-box units
  double mu = 0.0;
  Eigen::VectorXd M;
  double objective_min_eig = 0.0;
  double constraint_min_eig = 0.0;
  bool psd_verified = false;
  double worst_margin = 0.0;  // min over rows and box of the normalized margin
  std::optional<double> sdpr_gap;  // cost_bound - vertex max, when enumerable
};

struct VertexReport {
  Eigen::VectorXd margins;  // worst-case g per stacked row, physical units
  bool enumerated = false;
  std::optional<double> max_cost;
  Eigen::VectorXd max_cost_vertex;
};

// Worst case over the disturbance box. Enumerates all vertices when there are at most
// `enumeration_limit` active components, otherwise uses sign selection for the rows and
// leaves max_cost empty.
VertexReport vertex_worst_case_oracle(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                      int enumeration_limit = 12);

// Worst-case row margins by per-row sign selection of the box endpoints.
Eigen::VectorXd sign_selected_margins(const CondensedSystem& sys, const Eigen::VectorXd& u);

// [[2 mu, (g - M e - e mu)'], [*, 2 diag(M)]].
Eigen::MatrixXd nonnegativity_certificate(const Eigen::VectorXd& g, double mu,
                                          const Eigen::VectorXd& M);

// Terms of the Schur/SDPR derivation chain for one (u, D~, mu, M, d) tuple, physical units.
struct DerivationCheck {
  double schur_scalar = 0.0;  // 2 mu - h' (2M)^-1 h with h = g - M e - e mu
  double expanded = 0.0;      // term-by-term expansion in u, d and the constant margin
  double sdpr_form = 0.0;     // (d - lo)' D~ (hi - d) + [d;1]' L [d;1]
  double linear_form = 0.0;   // same with L from the Schur complement of the linear block
  double residual() const;    // largest relative disagreement
};

DerivationCheck check_derivation(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& multipliers, double mu,
                                 const Eigen::VectorXd& M, const Eigen::VectorXd& d);

struct RobustStep {
  StepOutcome outcome;
  std::optional<RobustCertificate> certificate;
};

class RobustMpc {
 public:
  RobustMpc(VehicleParams params, PowertrainFit fit, MpcSettings settings, DisturbanceBounds box,
            ZetaEnergy zeta_energy = ZetaEnergy::kWorstCaseLow);

  RobustStep step(const EgoState& measurement, const HorizonWindow& window);

  void reset(double previous_command = 0.0) { previous_ = previous_command; }
  const MpcSettings& settings() const { return settings_; }
  const DisturbanceBounds& box() const { return box_; }
  void set_weights(const ControllerWeights& weights);

 private:
  VehicleParams params_;
  PowertrainFit fit_;
  MpcSettings settings_;
  DisturbanceBounds box_;
  ZetaEnergy zeta_energy_;
  double previous_ = 0.0;
};

}  // namespace reacc
