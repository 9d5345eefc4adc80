#include "reacc/nominal_mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "affine_rows.hpp"

namespace reacc {

using conic::AffineExpr;
using conic::ConicProgram;
using conic::PsdBlock;

ZetaCone encode_zeta_cone(ConicProgram& program, int zeta_var, const AffineExpr& energy, double mass,
                          const std::string& tag) {
  if (!(mass > 0.0)) {
    throw std::invalid_argument("encode_zeta_cone: mass must be positive");
  }
  ZetaCone out;
  out.slack = program.add_variable("w[" + tag + "]");
  PsdBlock speed(2, "speed[" + tag + "]");
  speed.add(0, 0, energy * (2.0 / mass));
  speed.add(0, 1, AffineExpr::var(out.slack));
  speed.add_constant(1, 1, 1.0);
  out.energy_block = program.add_psd_block(std::move(speed));
  PsdBlock product(2, "pace[" + tag + "]");
  product.add(0, 0, AffineExpr::var(zeta_var));
  product.add_constant(0, 1, 1.0);
  product.add(1, 1, AffineExpr::var(out.slack));
  out.product_block = program.add_psd_block(std::move(product));
  return out;
}

NominalProgram build_nominal_qp(const CondensedSystem& sys, double mass) {
  require_consistent_bounds(sys);
  const int N = sys.N;
  NominalProgram out;
  auto& prog = out.program;
  for (int k = 0; k < N; ++k) {
    prog.add_variable("F_w[" + std::to_string(k) + "]");
    prog.add_variable("zeta[" + std::to_string(k) + "]");
  }
  out.u_first = 0;
  out.cost_bound = prog.add_variable("cost_bound");

  // t - 2Pz >= |Q(z - zref)|^2 as a Schur block.
  const Eigen::VectorXd z0 = sys.cost_offset();
  std::vector<int> rows;
  for (int i = 0; i < sys.n_cost(); ++i) {
    if (sys.Q(i, i) != 0.0) {
      rows.push_back(i);
    }
  }
  PsdBlock epi(1 + static_cast<int>(rows.size()), "cost");
  AffineExpr head = AffineExpr::var(out.cost_bound);
  head -= detail::affine_row(2.0 * sys.P * sys.D_zu, 2.0 * sys.P.dot(z0), out.u_first);
  epi.add(0, 0, head);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    const Eigen::RowVectorXd q = sys.Q.row(i);
    epi.add(0, 1 + static_cast<int>(r),
            detail::affine_row(q * sys.D_zu, q.dot(z0 - sys.z_ref), out.u_first));
    epi.add_constant(1 + static_cast<int>(r), 1 + static_cast<int>(r), 1.0);
  }
  epi.normalize();
  prog.add_psd_block(std::move(epi));

  const Eigen::VectorXd f0 = sys.constraint_offset();
  for (int i = 0; i < sys.n_constraint(); ++i) {
    if (sys.D_fu.row(i).isZero(0.0)) {
      continue;
    }
    const double range = sys.f_hi(i) - sys.f_lo(i);
    const AffineExpr f = detail::affine_row(sys.D_fu.row(i), f0(i), out.u_first);
    prog.add_linear({"lo[" + std::to_string(i) + "]", (f - sys.f_lo(i)) * (1.0 / range),
                     conic::Sense::kGreaterEqual});
    prog.add_linear({"hi[" + std::to_string(i) + "]", (sys.f_hi(i) - f) * (1.0 / range),
                     conic::Sense::kGreaterEqual});
  }

  const Eigen::VectorXd x_off = sys.state_offset();
  for (int k = 0; k < N; ++k) {
    const AffineExpr energy = detail::affine_row(sys.B_u.row(2 * k), x_off(2 * k), out.u_first);
    out.cones.push_back(
        encode_zeta_cone(prog, out.u_first + 2 * k + 1, energy, mass, std::to_string(k)));
  }
  prog.set_objective(AffineExpr::var(out.cost_bound));
  return out;
}

double zeta_slack(const Eigen::VectorXd& u, const Eigen::VectorXd& energies, double mass) {
  const Eigen::Index N = u.size() / 2;
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < N; ++k) {
    const double E = std::max(energies(k), 1e-300);
    worst = std::max(worst, u(2 * k + 1) - 1.0 / std::sqrt(2.0 * E / mass));
  }
  return N > 0 ? worst : 0.0;
}

double hold_command(double previous, const VehicleParams& params) {
  return std::clamp(previous, params.wheel_force_min(), params.wheel_force_max());
}

NominalMpc::NominalMpc(VehicleParams params, PowertrainFit fit, MpcSettings settings)
    : params_(params), fit_(fit), settings_(std::move(settings)) {
  params_.validate();
  fit_.validate();
  settings_.weights.validate();
  if (settings_.horizon < 1) {
    throw std::invalid_argument("nominal mpc: horizon must be >= 1");
  }
}

void NominalMpc::set_weights(const ControllerWeights& weights) {
  weights.validate();
  settings_.weights = weights;
}

StepOutcome NominalMpc::step(const EgoState& measurement, const HorizonWindow& window) {
  if (!(measurement.E >= params_.energy_min() * (1.0 - 1e-12))) {
    throw std::invalid_argument("nominal mpc: measured energy below E_min");
  }
  const auto t0 = std::chrono::steady_clock::now();
  StepOutcome out;
  const int N = std::min(settings_.horizon, static_cast<int>(window.v_lead_nom.size()));
  out.horizon = N;
  if (N < 1) {
    out.F_w = hold_command(previous_, params_);
    out.status = conic::SolveStatus::kOptimal;
    out.message = "end of route";
    return out;
  }
  const StageModels stage = build_stage_model(params_, fit_, settings_.weights, window, N);
  const CondensedSystem sys = condense(stage, measurement);
  const NominalProgram np = build_nominal_qp(sys, params_.m);
  const conic::SolveResult res = conic::solve(np.program, settings_.solver);
  out.status = res.status;
  out.message = res.message;
  if (res.optimal()) {
    out.u = res.values.segment(np.u_first, 2 * N);
    out.objective = res.values(np.cost_bound);
    out.states = predict_states(sys, out.u, Eigen::VectorXd::Zero(2 * N));
    Eigen::VectorXd energies(N);
    for (int k = 0; k < N; ++k) {
      energies(k) = out.states(2 * k);
    }
    out.zeta_slack = zeta_slack(out.u, energies, params_.m);
    out.F_w = std::clamp(out.u(0), params_.wheel_force_min(), params_.wheel_force_max());
  } else {
    out.fallback = true;
    out.F_w = hold_command(previous_, params_);
    out.message += "\n" + describe_window(window, params_);
  }
  previous_ = out.F_w;
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace reacc
