#include "reacc/condensed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace reacc {

void ControllerWeights::validate() const {
  if (!(W_E > 0.0) || !(W_F > 0.0) || !(W_zeta > 0.0) || !(W_dt > 0.0)) {
    throw std::invalid_argument("controller weights must all be positive");
  }
}

HorizonWindow window_at(const RoadProfile& profile, const std::vector<double>& v_lead_nom,
                        std::size_t k, int N, double gap_ref) {
  if (v_lead_nom.size() != profile.samples.size()) {
    throw std::invalid_argument("window_at: leader length mismatch");
  }
  if (k >= profile.samples.size()) {
    throw std::invalid_argument("window_at: index beyond the route");
  }
  HorizonWindow w;
  w.ds = profile.ds;
  w.gap_ref = gap_ref;
  const std::size_t remaining = profile.steps() - k;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(N, 0)), remaining);
  w.samples.assign(profile.samples.begin() + static_cast<std::ptrdiff_t>(k),
                   profile.samples.begin() + static_cast<std::ptrdiff_t>(k + n + 1));
  w.v_lead_nom.assign(v_lead_nom.begin() + static_cast<std::ptrdiff_t>(k),
                      v_lead_nom.begin() + static_cast<std::ptrdiff_t>(k + n));
  return w;
}

std::string describe_window(const HorizonWindow& window, const VehicleParams& params) {
  std::ostringstream os;
  os << "window ds=" << window.ds << " gap_ref=" << window.gap_ref << "\n";
  for (std::size_t k = 0; k < window.samples.size(); ++k) {
    const auto& x = window.samples[k];
    os << "  s=" << x.s << " kappa=" << x.kappa << " theta_nom=" << x.theta_nom
       << " v_max=" << combined_speed_limit(x, params);
    if (k < window.v_lead_nom.size()) {
      os << " v_lead_nom=" << window.v_lead_nom[k];
    }
    os << "\n";
  }
  return os.str();
}

StageModels build_stage_model(const VehicleParams& params, const PowertrainFit& fit,
                              const ControllerWeights& weights, const HorizonWindow& window,
                              int N) {
  if (N < 1) {
    throw std::invalid_argument("build_stage_model: horizon must be >= 1");
  }
  if (window.samples.size() < static_cast<std::size_t>(N + 1) ||
      window.v_lead_nom.size() < static_cast<std::size_t>(N)) {
    throw std::invalid_argument("build_stage_model: window shorter than the horizon");
  }
  if (!(window.ds > 0.0)) {
    throw std::invalid_argument("build_stage_model: spacing must be positive");
  }
  const double m = params.m;
  const double g = params.g;
  const double ds = window.ds;

  StageModels out;
  out.N = N;
  auto& model = out.model;
  model.A << 1.0 - 2.0 * params.f_d_nom * ds / m, 0.0, 0.0, 1.0;
  model.B_u = ds * Eigen::Matrix2d::Identity();
  model.B_c = model.B_u;
  model.B_d = model.B_u;
  model.C_seq.resize(N);
  for (int k = 0; k < N; ++k) {
    const double v_lead = window.v_lead_nom[k];
    if (!(v_lead > 0.0) || !std::isfinite(v_lead)) {
      throw std::invalid_argument("build_stage_model: nominal leader speed must be positive at step " +
                                  std::to_string(k));
    }
    const double th = window.samples[k].theta_nom;
    model.C_seq[k] << -m * g * params.f_r_nom * std::cos(th) - m * g * std::sin(th), -1.0 / v_lead;
  }

  auto& cons = out.constraints;
  cons.C_f << 1.0, 0.0, 0.0, 1.0, 0.0, 0.0;
  cons.D_fu << 0.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  cons.f_lo.resize(N + 1);
  cons.f_hi.resize(N + 1);
  auto& cost = out.cost;
  cost.C_z << 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0;
  cost.D_zu << 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  cost.Q_stage = Eigen::Vector4d(std::sqrt(weights.W_E), 0.0, std::sqrt(weights.W_F * fit.a1), 0.0)
                     .asDiagonal();
  cost.Q_terminal = cost.Q_stage;
  cost.Q_terminal(1, 1) = std::sqrt(weights.W_dt);
  cost.P << 0.0, 0.0, 0.5 * weights.W_F * fit.a2, 0.5 * weights.W_zeta;
  cost.z_ref.resize(N + 1);
  for (int k = 0; k <= N; ++k) {
    const double e_max = energy_max(window.samples[k], params);
    cons.f_lo[k] << params.energy_min(), params.dt_min, params.wheel_force_min();
    cons.f_hi[k] << e_max, params.dt_max, params.wheel_force_max();
    cost.z_ref[k] << e_max, window.gap_ref, 0.0, 0.0;
  }
  return out;
}

CondensedSystem condense(const StageModels& stage, const EgoState& x0,
                         const std::optional<DisturbanceBounds>& box) {
  const int N = stage.N;
  if (N < 1) {
    throw std::invalid_argument("condense: horizon must be >= 1");
  }
  const auto& mdl = stage.model;
  const auto& cons = stage.constraints;
  const auto& cost = stage.cost;

  CondensedSystem sys;
  sys.N = N;
  sys.x0 << x0.E, x0.dt_gap;
  sys.C.resize(2 * N);
  for (int k = 0; k < N; ++k) {
    sys.C.segment<2>(2 * k) = mdl.C_seq[k];
  }

  const int nx = 2 * (N + 1);
  std::vector<Eigen::Matrix2d> A_pow(N + 1);
  A_pow[0].setIdentity();
  for (int i = 1; i <= N; ++i) {
    A_pow[i] = mdl.A * A_pow[i - 1];
  }
  sys.A_s.resize(nx, 2);
  sys.B_u = Eigen::MatrixXd::Zero(nx, 2 * N);
  sys.B_c = Eigen::MatrixXd::Zero(nx, 2 * N);
  sys.B_d = Eigen::MatrixXd::Zero(nx, 2 * N);
  for (int i = 0; i <= N; ++i) {
    sys.A_s.block<2, 2>(2 * i, 0) = A_pow[i];
    for (int j = 0; j < i; ++j) {
      sys.B_u.block<2, 2>(2 * i, 2 * j) = A_pow[i - 1 - j] * mdl.B_u;
      sys.B_c.block<2, 2>(2 * i, 2 * j) = A_pow[i - 1 - j] * mdl.B_c;
      sys.B_d.block<2, 2>(2 * i, 2 * j) = A_pow[i - 1 - j] * mdl.B_d;
    }
  }

  const int nf = 3 * (N + 1);
  const int nz = 4 * (N + 1);
  Eigen::MatrixXd Cf_blk = Eigen::MatrixXd::Zero(nf, nx);
  Eigen::MatrixXd Cz_blk = Eigen::MatrixXd::Zero(nz, nx);
  Eigen::MatrixXd Dfu_blk = Eigen::MatrixXd::Zero(nf, 2 * N);
  Eigen::MatrixXd Dzu_blk = Eigen::MatrixXd::Zero(nz, 2 * N);
  for (int k = 0; k <= N; ++k) {
    Cf_blk.block<3, 2>(3 * k, 2 * k) = cons.C_f;
    Cz_blk.block<4, 2>(4 * k, 2 * k) = cost.C_z;
    if (k < N) {
      Dfu_blk.block<3, 2>(3 * k, 2 * k) = cons.D_fu;
      Dzu_blk.block<4, 2>(4 * k, 2 * k) = cost.D_zu;
    }
  }
  sys.C_f = Cf_blk * sys.A_s;
  sys.D_fu = Cf_blk * sys.B_u + Dfu_blk;
  sys.D_fc = Cf_blk * sys.B_c;
  sys.D_fd = Cf_blk * sys.B_d;
  sys.C_z = Cz_blk * sys.A_s;
  sys.D_zu = Cz_blk * sys.B_u + Dzu_blk;
  sys.D_zc = Cz_blk * sys.B_c;
  sys.D_zd = Cz_blk * sys.B_d;

  sys.f_lo.resize(nf);
  sys.f_hi.resize(nf);
  sys.z_ref.resize(nz);
  sys.Q = Eigen::MatrixXd::Zero(nz, nz);
  sys.P.resize(nz);
  for (int k = 0; k <= N; ++k) {
    sys.f_lo.segment<3>(3 * k) = cons.f_lo[k];
    sys.f_hi.segment<3>(3 * k) = cons.f_hi[k];
    sys.z_ref.segment<4>(4 * k) = cost.z_ref[k];
    sys.Q.block<4, 4>(4 * k, 4 * k) = (k < N) ? cost.Q_stage : cost.Q_terminal;
    sys.P.segment<4>(4 * k) = cost.P;
  }

  const DisturbanceBounds b = box.value_or(DisturbanceBounds{});
  if (b.dE_lo > b.dE_hi || b.dt_lo > b.dt_hi) {
    throw std::invalid_argument("condense: inverted disturbance box");
  }
  sys.d_lo.resize(2 * N);
  sys.d_hi.resize(2 * N);
  for (int k = 0; k < N; ++k) {
    sys.d_lo.segment<2>(2 * k) << b.dE_lo, b.dt_lo;
    sys.d_hi.segment<2>(2 * k) << b.dE_hi, b.dt_hi;
  }
  return sys;
}

Eigen::VectorXd CondensedSystem::state_offset() const { return A_s * x0 + B_c * C; }

Eigen::VectorXd CondensedSystem::constraint_offset() const { return C_f * x0 + D_fc * C; }

Eigen::VectorXd CondensedSystem::cost_offset() const { return C_z * x0 + D_zc * C; }

namespace {

void check_stacks(const CondensedSystem& sys, const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  if (u.size() != sys.n_input() || d.size() != sys.n_disturbance()) {
    throw std::invalid_argument("condensed prediction: stack dimension mismatch");
  }
}

}  // namespace

Eigen::VectorXd predict_states(const CondensedSystem& sys, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& d) {
  check_stacks(sys, u, d);
  return sys.state_offset() + sys.B_u * u + sys.B_d * d;
}

Eigen::VectorXd predict_constraints(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& d) {
  check_stacks(sys, u, d);
  return sys.constraint_offset() + sys.D_fu * u + sys.D_fd * d;
}

Eigen::VectorXd predict_cost_outputs(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                     const Eigen::VectorXd& d) {
  check_stacks(sys, u, d);
  return sys.cost_offset() + sys.D_zu * u + sys.D_zd * d;
}

double stacked_cost_value(const CondensedSystem& sys, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& d) {
  const Eigen::VectorXd z = predict_cost_outputs(sys, u, d);
  const Eigen::VectorXd r = sys.Q * (z - sys.z_ref);
  return r.squaredNorm() + 2.0 * sys.P.dot(z);
}

void require_consistent_bounds(const CondensedSystem& sys) {
  for (int i = 0; i < sys.f_lo.size(); ++i) {
    if (!(sys.f_lo(i) < sys.f_hi(i))) {
      throw std::invalid_argument("inconsistent bounds: f_lo >= f_hi at stacked row " +
                                  std::to_string(i));
    }
  }
}

}  // namespace reacc
