#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "reacc/condensed.hpp"
#include "reacc/robust_mpc.hpp"

namespace reacc::testing {

// Random admissible horizon window on a hilly, curvy road.
inline HorizonWindow random_window(std::mt19937& rng, int N, double ds = 3.0) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  HorizonWindow w;
  w.ds = ds;
  w.gap_ref = 2.0 + 2.0 * U(rng);
  for (int k = 0; k <= N; ++k) {
    RoadSample x;
    x.s = ds * k;
    x.kappa = U(rng) < 0.3 ? 0.02 * U(rng) : 0.0;
    x.theta_nom = deg_to_rad(-5.22 + 12.39 * U(rng));
    x.theta_true = x.theta_nom;
    x.v_leg = 12.0 + 10.0 * U(rng);
    x.v_lead_true = 5.0 + 10.0 * U(rng);
    w.samples.push_back(x);
  }
  for (int k = 0; k < N; ++k) {
    w.v_lead_nom.push_back(5.0 + 10.0 * U(rng));
  }
  return w;
}

// Per-step recursion of the disturbed nominal model.
inline Eigen::VectorXd recurse_states(const StageModels& st, const Eigen::Vector2d& x0,
                                      const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  const int N = st.N;
  Eigen::VectorXd out(2 * (N + 1));
  Eigen::Vector2d x = x0;
  out.head<2>() = x;
  for (int k = 0; k < N; ++k) {
    x = st.model.A * x + st.model.B_u * u.segment<2>(2 * k) + st.model.B_c * st.model.C_seq[k] +
        st.model.B_d * d.segment<2>(2 * k);
    out.segment<2>(2 * (k + 1)) = x;
  }
  return out;
}

// Sum of stage costs plus the terminal cost, written out per step.
inline double per_stage_cost(const StageModels& st, const ControllerWeights& w,
                             const PowertrainFit& fit, const Eigen::VectorXd& states,
                             const Eigen::VectorXd& u, double gap_ref) {
  const int N = st.N;
  double J = 0.0;
  for (int k = 0; k < N; ++k) {
    const double E = states(2 * k);
    const double F = u(2 * k);
    const double zeta = u(2 * k + 1);
    const double e_max = st.cost.z_ref[k](0);
    J += w.W_E * (E - e_max) * (E - e_max) + w.W_F * fit.a1 * F * F + w.W_F * fit.a2 * F +
         w.W_zeta * zeta;
  }
  const double E = states(2 * N);
  const double e_max = st.cost.z_ref[N](0);
  const double dt = states(2 * N + 1);
  J += w.W_E * (E - e_max) * (E - e_max) + w.W_dt * (dt - gap_ref) * (dt - gap_ref);
  return J;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Condensed random window with a random disturbance box applied to every step.
inline CondensedSystem random_robust_system(std::mt19937& rng, int N, double box_scale = 1.0) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const VehicleParams p;
  ControllerWeights cw;
  HorizonWindow w = random_window(rng, N);
  const auto st = build_stage_model(p, PowertrainFit{}, cw, w, N);
  const DisturbanceBounds box{-box_scale * (50.0 + 100.0 * U(rng)), box_scale * (50.0 + 100.0 * U(rng)),
                              -box_scale * (0.005 + 0.02 * U(rng)), box_scale * (0.005 + 0.02 * U(rng))};
  return condense(st, {kinetic_energy(8.0 + 3.0 * U(rng), p), 2.5 + U(rng)}, box);
}

struct RobustSolution {
  Eigen::VectorXd u;
  double cost_bound = 0.0;
  Eigen::VectorXd values;
};

inline std::optional<RobustSolution> solve_robust(const RobustProgram& rp, int N) {
  const auto res = conic::solve(rp.program);
  if (!res.optimal()) {
    return std::nullopt;
  }
  return RobustSolution{res.values.head(2 * N), res.values(rp.objective_vars.cost_bound), res.values};
}

}  // namespace reacc::testing
