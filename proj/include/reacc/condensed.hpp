#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "reacc/powertrain.hpp"
#include "reacc/vehicle.hpp"

namespace reacc {

struct ControllerWeights {
  double W_E = 1e-8;
  double W_F = 1e-2;
  double W_zeta = 1e2;
  double W_dt = 2.0;

  void validate() const;
};

// Road and leader data seen by the controller from its current position onward.
struct HorizonWindow {
  double ds = 3.0;
  std::vector<RoadSample> samples;  // N+1 entries, samples[0] at the current position
  std::vector<double> v_lead_nom;   // N entries
  double gap_ref = 3.0;             // terminal time-gap reference
};

// Window starting at sample k with horizon min(N, k_s - k); empty when k is the last sample.
HorizonWindow window_at(const RoadProfile& profile, const std::vector<double>& v_lead_nom,
                        std::size_t k, int N, double gap_ref);

// One line per window sample, for failure diagnostics.
std::string describe_window(const HorizonWindow& window, const VehicleParams& params);

struct NominalStageModel {
  Eigen::Matrix2d A;
  Eigen::Matrix2d B_u;
  Eigen::Matrix2d B_c;
  Eigen::Matrix2d B_d;
  std::vector<Eigen::Vector2d> C_seq;
};

struct ConstraintMap {
  Eigen::Matrix<double, 3, 2> C_f;
  Eigen::Matrix<double, 3, 2> D_fu;
  std::vector<Eigen::Vector3d> f_lo;  // N+1 entries
  std::vector<Eigen::Vector3d> f_hi;
};

struct CostMap {
  Eigen::Matrix<double, 4, 2> C_z;
  Eigen::Matrix<double, 4, 2> D_zu;
  Eigen::Matrix4d Q_stage;     // Q(0)
  Eigen::Matrix4d Q_terminal;  // Q(W_dt)
  Eigen::RowVector4d P;
  std::vector<Eigen::Vector4d> z_ref;  // N+1 entries
};

struct StageModels {
  int N = 0;
  NominalStageModel model;
  ConstraintMap constraints;
  CostMap cost;
};

// Stacked horizon matrices. Stack ordering is time-major: x = [x(0); ...; x(N)],
// u = [F_w(0), zeta(0), ..., F_w(N-1), zeta(N-1)], d = [d_E(0), d_t(0), ...].
struct CondensedSystem {
  int N = 0;
  Eigen::Vector2d x0;
  Eigen::VectorXd C;  // 2N

  Eigen::MatrixXd A_s, B_u, B_c, B_d;  // state stack, 2(N+1) rows
  Eigen::MatrixXd C_f, D_fu, D_fc, D_fd;  // constraint stack, 3(N+1) rows
  Eigen::MatrixXd C_z, D_zu, D_zc, D_zd;  // cost stack, 4(N+1) rows

  Eigen::VectorXd f_lo, f_hi;  // 3(N+1)
  Eigen::VectorXd z_ref;       // 4(N+1)
  Eigen::MatrixXd Q;           // 4(N+1) square, block diagonal
  Eigen::RowVectorXd P;        // 4(N+1)
  Eigen::VectorXd d_lo, d_hi;  // 2N

  int n_state() const { return 2 * (N + 1); }
  int n_input() const { return 2 * N; }
  int n_constraint() const { return 3 * (N + 1); }
  int n_cost() const { return 4 * (N + 1); }
  int n_disturbance() const { return 2 * N; }

  // Constant part of the state/constraint/cost predictions (u = 0, d = 0).
  Eigen::VectorXd state_offset() const;
  Eigen::VectorXd constraint_offset() const;
  Eigen::VectorXd cost_offset() const;
};

StageModels build_stage_model(const VehicleParams& params, const PowertrainFit& fit,
                              const ControllerWeights& weights, const HorizonWindow& window, int N);

// The disturbance box applies to every step; nullopt gives a degenerate zero box.
CondensedSystem condense(const StageModels& stage, const EgoState& x0,
                         const std::optional<DisturbanceBounds>& box = std::nullopt);

Eigen::VectorXd predict_states(const CondensedSystem& sys, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& d);
Eigen::VectorXd predict_constraints(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& d);
Eigen::VectorXd predict_cost_outputs(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& d);

double stacked_cost_value(const CondensedSystem& sys, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& d);

// Throws std::invalid_argument when some f_lo >= f_hi.
void require_consistent_bounds(const CondensedSystem& sys);

}  // namespace reacc
