#include "reacc/robust_mpc.hpp"

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

ScaledBox ScaledBox::from(const CondensedSystem& sys) {
  ScaledBox box;
  const int nd = sys.n_disturbance();
  for (int i = 0; i < nd; ++i) {
    if (sys.d_lo(i) > sys.d_hi(i)) {
      throw std::invalid_argument("disturbance box: lower bound above upper bound");
    }
    if (sys.d_lo(i) != 0.0 || sys.d_hi(i) != 0.0) {
      box.active.push_back(i);
    }
  }
  const int na = box.size();
  box.scale.resize(na);
  box.lo.resize(na);
  box.hi.resize(na);
  box.lift = Eigen::MatrixXd::Zero(nd, na);
  for (int a = 0; a < na; ++a) {
    const int i = box.active[a];
    const double h = std::max(std::abs(sys.d_lo(i)), std::abs(sys.d_hi(i)));
    box.scale(a) = h;
    box.lo(a) = sys.d_lo(i) / h;
    box.hi(a) = sys.d_hi(i) / h;
    box.lift(i, a) = h;
  }
  return box;
}

namespace {

// d g / d u and d g / d d for the 6(N+1) stacked margins.
Eigen::MatrixXd margin_input_jacobian(const CondensedSystem& sys) {
  const int nf = sys.n_constraint();
  Eigen::MatrixXd J(2 * nf, sys.n_input());
  J.topRows(nf) = -sys.D_fu;
  J.bottomRows(nf) = sys.D_fu;
  return J;
}

Eigen::MatrixXd margin_disturbance_jacobian(const CondensedSystem& sys) {
  const int nf = sys.n_constraint();
  Eigen::MatrixXd J(2 * nf, sys.n_disturbance());
  J.topRows(nf) = -sys.D_fd;
  J.bottomRows(nf) = sys.D_fd;
  return J;
}

Eigen::VectorXd margin_offset(const CondensedSystem& sys) {
  const int nf = sys.n_constraint();
  const Eigen::VectorXd f0 = sys.constraint_offset();
  Eigen::VectorXd g(2 * nf);
  g.head(nf) = sys.f_hi - f0;
  g.tail(nf) = f0 - sys.f_lo;
  return g;
}

std::vector<int> weighted_rows(const CondensedSystem& sys) {
  std::vector<int> rows;
  for (int i = 0; i < sys.n_cost(); ++i) {
    if (sys.Q(i, i) != 0.0) {
      rows.push_back(i);
    }
  }
  return rows;
}

}  // namespace

SlmiRows SlmiRows::from(const CondensedSystem& sys) {
  SlmiRows out;
  const int nf = sys.n_constraint();
  std::vector<double> w;
  for (int r = 0; r < 2 * nf; ++r) {
    const int i = r % nf;
    if (sys.D_fu.row(i).isZero(0.0) && sys.D_fd.row(i).isZero(0.0)) {
      continue;
    }
    out.rows.push_back(r);
    w.push_back(1.0 / (sys.f_hi(i) - sys.f_lo(i)));
  }
  out.weight = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return out;
}

Eigen::VectorXd stacked_margins(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                const Eigen::VectorXd& d) {
  const Eigen::VectorXd f = predict_constraints(sys, u, d);
  const int nf = sys.n_constraint();
  Eigen::VectorXd g(2 * nf);
  g.head(nf) = sys.f_hi - f;
  g.tail(nf) = f - sys.f_lo;
  return g;
}

PsdBlock build_objective_lmi(const CondensedSystem& sys, const ScaledBox& box,
                             const ObjectiveVars& vars) {
  const int na = box.size();
  const std::vector<int> rows = weighted_rows(sys);
  const int nr = static_cast<int>(rows.size());
  Eigen::MatrixXd QDzu(nr, sys.n_input());
  Eigen::MatrixXd G(nr, na);
  Eigen::VectorXd r0(nr);
  const Eigen::VectorXd z0 = sys.cost_offset();
  const Eigen::MatrixXd Dzd_s = sys.D_zd * box.lift;
  for (int r = 0; r < nr; ++r) {
    const int i = rows[r];
    const double q = sys.Q(i, i);
    QDzu.row(r) = q * sys.D_zu.row(i);
    G.row(r) = q * Dzd_s.row(i);
    r0(r) = q * (z0(i) - sys.z_ref(i));
  }
  const Eigen::MatrixXd GtG = G.transpose() * G;
  const Eigen::VectorXd Pd = (sys.P * Dzd_s).transpose();

  PsdBlock blk(na + 1 + nr, "objective");
  const int s = na;
  for (int a = 0; a < na; ++a) {
    for (int b = a; b < na; ++b) {
      blk.add_constant(a, b, -GtG(a, b));
    }
    blk.add_term(vars.mult_first + a, a, a, 1.0);
    // -D (lo + hi)/2 - bd, bd = G'(r0 + Q Dzu u) + Dzd' P'.
    AffineExpr entry = detail::affine_row(-(G.col(a).transpose() * QDzu), -G.col(a).dot(r0) - Pd(a),
                                          vars.u_first);
    entry += AffineExpr::var(vars.mult_first + a, -0.5 * (box.lo(a) + box.hi(a)));
    blk.add(a, s, entry);
  }
  // lo' D hi - cd + cost_bound, cd = |r0|^2 + 2 r0' Q Dzu u + 2 P z(u).
  AffineExpr corner = AffineExpr::var(vars.cost_bound);
  for (int a = 0; a < na; ++a) {
    corner += AffineExpr::var(vars.mult_first + a, box.lo(a) * box.hi(a));
  }
  const Eigen::RowVectorXd lin = 2.0 * r0.transpose() * QDzu + 2.0 * sys.P * sys.D_zu;
  corner -= detail::affine_row(lin, r0.squaredNorm() + 2.0 * sys.P.dot(z0), vars.u_first);
  blk.add(s, s, corner);
  for (int r = 0; r < nr; ++r) {
    blk.add(s, s + 1 + r, detail::affine_row(QDzu.row(r), 0.0, vars.u_first));
    blk.add_constant(s + 1 + r, s + 1 + r, 1.0);
  }
  blk.normalize();
  return blk;
}

PsdBlock build_constraint_slmi(const CondensedSystem& sys, const ScaledBox& box,
                               const SlmiRows& rows, const ConstraintVars& vars) {
  const int na = box.size();
  const int nk = rows.size();
  const Eigen::MatrixXd Ju = margin_input_jacobian(sys);
  const Eigen::MatrixXd Jd = margin_disturbance_jacobian(sys) * box.lift;
  const Eigen::VectorXd g0 = margin_offset(sys);

  PsdBlock blk(na + 1 + nk, "constraints");
  const int s = na;
  for (int a = 0; a < na; ++a) {
    blk.add_term(vars.mult_first + a, a, a, 1.0);
    blk.add_term(vars.mult_first + a, a, s, -0.5 * (box.lo(a) + box.hi(a)));
  }
  AffineExpr corner = AffineExpr::var(vars.mu, 2.0);
  for (int a = 0; a < na; ++a) {
    corner += AffineExpr::var(vars.mult_first + a, box.lo(a) * box.hi(a));
  }
  blk.add(s, s, corner);
  for (int j = 0; j < nk; ++j) {
    const int r = rows.rows[j];
    const double w = rows.weight(j);
    const int col = s + 1 + j;
    for (int a = 0; a < na; ++a) {
      blk.add_constant(a, col, w * Jd(r, a));
    }
    AffineExpr h = detail::affine_row(w * Ju.row(r), w * g0(r), vars.u_first);
    h -= AffineExpr::var(vars.M_first + j);
    h -= AffineExpr::var(vars.mu);
    blk.add(s, col, h);
    blk.add_term(vars.M_first + j, col, col, 2.0);
  }
  blk.normalize();
  return blk;
}

Eigen::VectorXd worst_case_low_energy(const CondensedSystem& sys, const Eigen::VectorXd& u) {
  const int N = sys.N;
  const Eigen::VectorXd x = sys.state_offset() + sys.B_u * u;
  Eigen::VectorXd out(N);
  for (int k = 0; k < N; ++k) {
    double e = x(2 * k);
    for (int j = 0; j < sys.n_disturbance(); ++j) {
      const double c = sys.B_d(2 * k, j);
      e += std::min(c * sys.d_lo(j), c * sys.d_hi(j));
    }
    out(k) = e;
  }
  return out;
}

RobustProgram assemble_rmpc(const CondensedSystem& sys, double mass, ZetaEnergy zeta_energy) {
  require_consistent_bounds(sys);
  const int N = sys.N;
  RobustProgram out;
  out.box = ScaledBox::from(sys);
  out.rows = SlmiRows::from(sys);
  auto& prog = out.program;
  for (int k = 0; k < N; ++k) {
    prog.add_variable("F_w[" + std::to_string(k) + "]");
    prog.add_variable("zeta[" + std::to_string(k) + "]");
  }
  const int na = out.box.size();
  const int nk = out.rows.size();
  auto& ov = out.objective_vars;
  auto& cv = out.constraint_vars;
  ov.u_first = cv.u_first = 0;
  ov.mult_first = na > 0 ? prog.add_variables("D", na) : prog.n_vars();
  cv.mult_first = na > 0 ? prog.add_variables("Dc", na) : prog.n_vars();
  cv.mu = prog.add_variable("mu");
  cv.M_first = nk > 0 ? prog.add_variables("M", nk) : prog.n_vars();
  ov.cost_bound = prog.add_variable("cost_bound");

  out.objective_block = prog.add_psd_block(build_objective_lmi(sys, out.box, ov));
  out.constraint_block = prog.add_psd_block(build_constraint_slmi(sys, out.box, out.rows, cv));
  if (na > 0) {
    std::vector<int> d_vars(na);
    std::vector<int> dc_vars(na);
    for (int a = 0; a < na; ++a) {
      d_vars[a] = ov.mult_first + a;
      dc_vars[a] = cv.mult_first + a;
    }
    prog.add_diag_nonneg("D", d_vars);
    prog.add_diag_nonneg("Dc", dc_vars);
  }

  const Eigen::VectorXd x_off = sys.state_offset();
  for (int k = 0; k < N; ++k) {
    double shift = 0.0;
    if (zeta_energy == ZetaEnergy::kWorstCaseLow) {
      for (int j = 0; j < sys.n_disturbance(); ++j) {
        const double c = sys.B_d(2 * k, j);
        shift += std::min(c * sys.d_lo(j), c * sys.d_hi(j));
      }
    }
    const AffineExpr energy = detail::affine_row(sys.B_u.row(2 * k), x_off(2 * k) + shift, 0);
    out.cones.push_back(encode_zeta_cone(prog, 2 * k + 1, energy, mass, std::to_string(k)));
  }
  prog.set_objective(AffineExpr::var(ov.cost_bound));
  return out;
}

Eigen::VectorXd sign_selected_margins(const CondensedSystem& sys, const Eigen::VectorXd& u) {
  const Eigen::VectorXd g = stacked_margins(sys, u, Eigen::VectorXd::Zero(sys.n_disturbance()));
  const Eigen::MatrixXd Jd = margin_disturbance_jacobian(sys);
  Eigen::VectorXd out = g;
  for (int r = 0; r < g.size(); ++r) {
    for (int j = 0; j < Jd.cols(); ++j) {
      const double c = Jd(r, j);
      out(r) += std::min(c * sys.d_lo(j), c * sys.d_hi(j));
    }
  }
  return out;
}

VertexReport vertex_worst_case_oracle(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                      int enumeration_limit) {
  VertexReport rep;
  std::vector<int> active;
  for (int i = 0; i < sys.n_disturbance(); ++i) {
    if (sys.d_lo(i) != sys.d_hi(i)) {
      active.push_back(i);
    }
  }
  const int na = static_cast<int>(active.size());
  if (na > enumeration_limit || na > 30) {
    rep.margins = sign_selected_margins(sys, u);
    return rep;
  }
  rep.enumerated = true;
  Eigen::VectorXd d = sys.d_lo;
  rep.margins = Eigen::VectorXd::Constant(2 * sys.n_constraint(),
                                          std::numeric_limits<double>::infinity());
  double best = -std::numeric_limits<double>::infinity();
  const std::uint64_t count = std::uint64_t{1} << na;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (int a = 0; a < na; ++a) {
      const int i = active[a];
      d(i) = ((mask >> a) & 1U) ? sys.d_hi(i) : sys.d_lo(i);
    }
    rep.margins = rep.margins.cwiseMin(stacked_margins(sys, u, d));
    const double J = stacked_cost_value(sys, u, d);
    if (J > best) {
      best = J;
      rep.max_cost_vertex = d;
    }
  }
  rep.max_cost = best;
  return rep;
}

Eigen::MatrixXd nonnegativity_certificate(const Eigen::VectorXd& g, double mu,
                                          const Eigen::VectorXd& M) {
  if (g.size() != M.size()) {
    throw std::invalid_argument("nonnegativity_certificate: size mismatch");
  }
  const Eigen::Index n = g.size();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n + 1, n + 1);
  L(0, 0) = 2.0 * mu;
  const Eigen::VectorXd h = g - M - Eigen::VectorXd::Constant(n, mu);
  L.block(0, 1, 1, n) = h.transpose();
  L.block(1, 0, n, 1) = h;
  L.bottomRightCorner(n, n) = (2.0 * M).asDiagonal();
  return L;
}

double DerivationCheck::residual() const {
  const double scale = std::max(1.0, std::abs(schur_scalar));
  return std::max({std::abs(expanded - schur_scalar), std::abs(sdpr_form - schur_scalar),
                   std::abs(linear_form - schur_scalar)}) /
         scale;
}

DerivationCheck check_derivation(const CondensedSystem& sys, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& multipliers, double mu,
                                 const Eigen::VectorXd& M, const Eigen::VectorXd& d) {
  const int nf = sys.n_constraint();
  const int ng = 2 * nf;
  const int nd = sys.n_disturbance();
  if (M.size() != ng || multipliers.size() != nd || d.size() != nd || u.size() != sys.n_input()) {
    throw std::invalid_argument("check_derivation: dimension mismatch");
  }
  const Eigen::VectorXd e = Eigen::VectorXd::Ones(ng);
  const Eigen::VectorXd Winv = (2.0 * M).cwiseInverse();

  DerivationCheck out;
  const Eigen::VectorXd h = stacked_margins(sys, u, d) - M - mu * e;
  out.schur_scalar = 2.0 * mu - h.dot(Winv.asDiagonal() * h);

  // fbar' - I* Dfu u - I* Dfd d - (M e + e mu), expanded pairwise.
  Eigen::MatrixXd Istar(ng, nf);
  Istar << Eigen::MatrixXd::Identity(nf, nf), -Eigen::MatrixXd::Identity(nf, nf);
  Eigen::VectorXd fstar(ng);
  fstar << sys.f_hi, -sys.f_lo;
  const Eigen::VectorXd fp = fstar - Istar * (sys.C_f * sys.x0 + sys.D_fc * sys.C);
  const Eigen::VectorXd a = Istar * sys.D_fu * u;
  const Eigen::VectorXd b = Istar * sys.D_fd * d;
  const Eigen::VectorXd c = M + mu * e;
  auto q = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return x.dot(Winv.asDiagonal() * y);
  };
  out.expanded = 2.0 * mu - q(fp, fp) + q(fp, a) + q(fp, b) + q(fp, c) + q(a, fp) - q(a, a) -
                 q(a, b) - q(a, c) + q(b, fp) - q(b, a) - q(b, b) - q(b, c) + q(c, fp) - q(c, a) -
                 q(c, b) - q(c, c);

  // S-procedure form with the nonlinear L and with the Schur complement of the linear block.
  const Eigen::MatrixXd Hd = -Istar * sys.D_fd;
  const Eigen::VectorXd h0 = fp - a - c;
  const Eigen::VectorXd& Dm = multipliers;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(nd + 1, nd + 1);
  L.topLeftCorner(nd, nd) = Dm.asDiagonal();
  L.block(0, nd, nd, 1) = -0.5 * Dm.cwiseProduct(sys.d_lo + sys.d_hi);
  L.block(nd, 0, 1, nd) = L.block(0, nd, nd, 1).transpose();
  L(nd, nd) = 2.0 * mu + sys.d_lo.dot(Dm.cwiseProduct(sys.d_hi));
  Eigen::MatrixXd B(ng, nd + 1);
  B << Hd, h0;
  const Eigen::MatrixXd L_nl = L - B.transpose() * Winv.asDiagonal() * B;
  Eigen::VectorXd v(nd + 1);
  v << d, 1.0;
  const double box_term = (d - sys.d_lo).dot(Dm.cwiseProduct(sys.d_hi - d));
  out.sdpr_form = box_term + v.dot(L_nl * v);

  const int n = nd + 1 + ng;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(n, n);
  full.topLeftCorner(nd + 1, nd + 1) = L;
  full.block(0, nd + 1, nd + 1, ng) = B.transpose();
  full.block(nd + 1, 0, ng, nd + 1) = B;
  full.bottomRightCorner(ng, ng) = (2.0 * M).asDiagonal();
  const Eigen::MatrixXd S =
      full.topLeftCorner(nd + 1, nd + 1) -
      full.block(0, nd + 1, nd + 1, ng) *
          full.bottomRightCorner(ng, ng).ldlt().solve(full.block(nd + 1, 0, ng, nd + 1));
  out.linear_form = box_term + v.dot(S * v);
  return out;
}

RobustMpc::RobustMpc(VehicleParams params, PowertrainFit fit, MpcSettings settings,
                     DisturbanceBounds box, ZetaEnergy zeta_energy)
    : params_(params), fit_(fit), settings_(std::move(settings)), box_(box),
      zeta_energy_(zeta_energy) {
  params_.validate();
  fit_.validate();
  settings_.weights.validate();
  if (settings_.horizon < 1) {
    throw std::invalid_argument("robust mpc: horizon must be >= 1");
  }
  if (box_.dE_lo > box_.dE_hi || box_.dt_lo > box_.dt_hi) {
    throw std::invalid_argument("robust mpc: inverted disturbance box");
  }
}

void RobustMpc::set_weights(const ControllerWeights& weights) {
  weights.validate();
  settings_.weights = weights;
}

RobustStep RobustMpc::step(const EgoState& measurement, const HorizonWindow& window) {
  if (!(measurement.E >= params_.energy_min() * (1.0 - 1e-12))) {
    throw std::invalid_argument("robust mpc: measured energy below E_min");
  }
  const auto t0 = std::chrono::steady_clock::now();
  RobustStep result;
  StepOutcome& out = result.outcome;
  const int N = std::min(settings_.horizon, static_cast<int>(window.v_lead_nom.size()));
  out.horizon = N;
  if (N < 1) {
    out.F_w = hold_command(previous_, params_);
    out.status = conic::SolveStatus::kOptimal;
    out.message = "end of route";
    return result;
  }
  const StageModels stage = build_stage_model(params_, fit_, settings_.weights, window, N);
  const CondensedSystem sys = condense(stage, measurement, box_);
  const RobustProgram rp = assemble_rmpc(sys, params_.m, zeta_energy_);
  const conic::SolveResult res = conic::solve(rp.program, settings_.solver);
  out.status = res.status;
  out.message = res.message;
  bool accepted = res.optimal();
  if (accepted) {
    const Eigen::VectorXd& x = res.values;
    RobustCertificate cert;
    cert.u = x.head(2 * N);
    cert.cost_bound = x(rp.objective_vars.cost_bound);
    const int na = rp.box.size();
    cert.objective_multipliers = x.segment(rp.objective_vars.mult_first, na);
    cert.constraint_multipliers = x.segment(rp.constraint_vars.mult_first, na);
    cert.mu = x(rp.constraint_vars.mu);
    cert.M = x.segment(rp.constraint_vars.M_first, rp.rows.size());
    const auto& blocks = rp.program.psd_blocks();
    cert.objective_min_eig =
        conic::check_psd(blocks[rp.objective_block.index].evaluate(x), 0.0).min_eigenvalue;
    cert.constraint_min_eig =
        conic::check_psd(blocks[rp.constraint_block.index].evaluate(x), 0.0).min_eigenvalue;
    cert.psd_verified = cert.objective_min_eig >= -1e-6 && cert.constraint_min_eig >= -1e-6;
    const Eigen::VectorXd worst = sign_selected_margins(sys, cert.u);
    cert.worst_margin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < rp.rows.size(); ++j) {
      cert.worst_margin = std::min(cert.worst_margin, worst(rp.rows.rows[j]) * rp.rows.weight(j));
    }
    if (na <= 12) {
      const VertexReport rep = vertex_worst_case_oracle(sys, cert.u, 12);
      if (rep.max_cost) {
        cert.sdpr_gap = cert.cost_bound - *rep.max_cost;
      }
    }
    out.u = cert.u;
    out.objective = cert.cost_bound;
    out.states = predict_states(sys, out.u, Eigen::VectorXd::Zero(2 * N));
    const Eigen::VectorXd energies = zeta_energy_ == ZetaEnergy::kWorstCaseLow
                                         ? worst_case_low_energy(sys, out.u)
                                         : Eigen::VectorXd(out.states(Eigen::seqN(0, N, 2)));
    out.zeta_slack = zeta_slack(out.u, energies, params_.m);
    if (!cert.psd_verified) {
      accepted = false;
      out.status = conic::SolveStatus::kNumericalFailure;
      out.message = "certificate rejected by the eigenvalue check";
    }
    result.certificate = std::move(cert);
  }
  if (accepted) {
    out.F_w = std::clamp(out.u(0), params_.wheel_force_min(), params_.wheel_force_max());
  } else {
    out.fallback = true;
    out.F_w = hold_command(previous_, params_);
    out.message += "\n" + describe_window(window, params_);
  }
  previous_ = out.F_w;
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace reacc
