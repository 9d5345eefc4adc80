#include <gtest/gtest.h>

#include <limits>

#include "fixtures.hpp"
#include "reacc/nominal_mpc.hpp"

namespace reacc {
namespace {

using testing::random_window;

constexpr double kMass = 1200.0;

// min or fix zeta subject to the cone with 2E/m = 100.
conic::ConicProgram zeta_program(std::optional<double> fixed_zeta) {
  conic::ConicProgram prog;
  const int zeta = prog.add_variable("zeta");
  encode_zeta_cone(prog, zeta, conic::AffineExpr(50.0 * kMass), kMass, "0");
  if (fixed_zeta) {
    prog.add_linear({"fix", conic::AffineExpr::var(zeta) - *fixed_zeta, conic::Sense::kEqual});
  } else {
    prog.set_objective(conic::AffineExpr::var(zeta));
  }
  return prog;
}

HorizonWindow flat_window(int N, double v_leg, double v_lead, double gap_ref = 3.0) {
  HorizonWindow w;
  w.gap_ref = gap_ref;
  for (int k = 0; k <= N; ++k) {
    RoadSample x;
    x.s = w.ds * k;
    x.v_leg = v_leg;
    x.v_lead_true = v_lead;
    w.samples.push_back(x);
  }
  w.v_lead_nom.assign(N, v_lead);
  return w;
}

TEST(ZetaCone, MinimalZetaIsInverseSpeed) {
  const auto res = conic::solve(zeta_program(std::nullopt));
  ASSERT_TRUE(res.optimal()) << res.message;
  EXPECT_NEAR(res.values(0), 0.1, 1e-6);
}

TEST(ZetaCone, FeasiblePointDeterminants) {
  const auto prog = zeta_program(std::nullopt);
  Eigen::VectorXd x(2);
  x << 0.2, 10.0;
  const Eigen::MatrixXd speed = prog.psd_blocks()[0].evaluate(x);
  const Eigen::MatrixXd pace = prog.psd_blocks()[1].evaluate(x);
  // w^2 = 2E/m puts the speed block on its boundary.
  EXPECT_NEAR(speed.determinant(), 0.0, 1e-12);
  EXPECT_GT(speed(0, 0), 0.0);
  EXPECT_NEAR(pace.determinant(), 1.0, 1e-12);
  EXPECT_GT(pace(0, 0), 0.0);
  EXPECT_TRUE(conic::check_psd(speed, 1e-12).psd);
  EXPECT_TRUE(conic::check_psd(pace, 1e-12).psd);
}

TEST(ZetaCone, BelowInverseSpeedIsInfeasible) {
  const auto prog = zeta_program(0.05);
  for (double w = 0.0; w <= 40.0; w += 0.25) {
    Eigen::VectorXd x(2);
    x << 0.05, w;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& blk : prog.psd_blocks()) {
      worst = std::min(worst, conic::check_psd(blk.evaluate(x), 0.0).min_eigenvalue);
    }
    EXPECT_LT(worst, 0.0) << "w = " << w;
  }
  EXPECT_EQ(conic::solve(prog).status, conic::SolveStatus::kInfeasible);
}

TEST(NominalQp, InconsistentBoundsRejected) {
  const VehicleParams p;
  const auto w = flat_window(3, 15.0, 15.0);
  const auto st = build_stage_model(p, PowertrainFit{}, ControllerWeights{}, w, 3);
  CondensedSystem sys = condense(st, {kinetic_energy(15.0, p), 3.0});
  sys.f_lo(4) = p.dt_max + 1.0;
  EXPECT_THROW(build_nominal_qp(sys, p.m), std::invalid_argument);
}

TEST(NominalQp, SteadyStateAtSpeedLimit) {
  const VehicleParams p;
  MpcSettings s;
  s.weights.W_E = 1e-4;
  NominalMpc mpc(p, PowertrainFit{}, s);
  const auto out = mpc.step({kinetic_energy(15.0, p), 3.0}, flat_window(11, 15.0, 15.0));
  ASSERT_EQ(out.status, conic::SolveStatus::kOptimal) << out.message;
  const double steady = p.f_d_nom * 15.0 * 15.0 + p.m * p.g * p.f_r_nom;
  EXPECT_NEAR(steady, 194.22, 1e-9);
  EXPECT_NEAR(out.F_w, steady, 0.05);
  EXPECT_LE(out.zeta_slack, 1e-5);
}

// Cost of inputs F with zeta set to the inverse predicted speed, or +inf when infeasible.
double tight_cost(const CondensedSystem& sys, const Eigen::Vector3d& F) {
  const int N = sys.N;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * N);
  for (int k = 0; k < N; ++k) {
    u(2 * k) = F(k);
    const double E = predict_states(sys, u, Eigen::VectorXd::Zero(2 * N))(2 * k);
    if (!(E > 0.0)) {
      return std::numeric_limits<double>::infinity();
    }
    u(2 * k + 1) = 1.0 / std::sqrt(2.0 * E / kMass);
  }
  const Eigen::VectorXd f = predict_constraints(sys, u, Eigen::VectorXd::Zero(2 * N));
  for (int i = 0; i < f.size(); ++i) {
    if (sys.D_fu.row(i).isZero(0.0)) {
      continue;
    }
    if (f(i) < sys.f_lo(i) || f(i) > sys.f_hi(i)) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return stacked_cost_value(sys, u, Eigen::VectorXd::Zero(2 * N));
}

TEST(NominalQp, ThreeStepGridSearch) {
  const VehicleParams p;
  ControllerWeights cw;
  cw.W_E = 1e-4;
  HorizonWindow w = flat_window(3, 15.0, 13.0, 2.0);
  w.samples[1].theta_nom = w.samples[1].theta_true = deg_to_rad(2.0);
  w.samples[3].v_leg = 12.0;
  const auto st = build_stage_model(p, PowertrainFit{}, cw, w, 3);
  const CondensedSystem sys = condense(st, {kinetic_energy(14.0, p), 3.0});
  const auto np = build_nominal_qp(sys, p.m);
  const auto res = conic::solve(np.program);
  ASSERT_TRUE(res.optimal()) << res.message;
  const double solved = res.values(np.cost_bound);

  const double lo = p.wheel_force_min();
  const double hi = p.wheel_force_max();
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d arg = Eigen::Vector3d::Zero();
  const int coarse = 56;
  const double h = (hi - lo) / coarse;
  for (int a = 0; a <= coarse; ++a) {
    for (int b = 0; b <= coarse; ++b) {
      for (int c = 0; c <= coarse; ++c) {
        const Eigen::Vector3d F(lo + a * h, lo + b * h, lo + c * h);
        const double J = tight_cost(sys, F);
        if (J < best) {
          best = J;
          arg = F;
        }
      }
    }
  }
  const int fine = 40;
  const Eigen::Vector3d centre = arg;
  const double g = 4.0 * h / fine;
  for (int a = 0; a <= fine; ++a) {
    for (int b = 0; b <= fine; ++b) {
      for (int c = 0; c <= fine; ++c) {
        const Eigen::Vector3d F =
            centre + Eigen::Vector3d(a * g, b * g, c * g) - Eigen::Vector3d::Constant(2.0 * h);
        if ((F.array() < lo).any() || (F.array() > hi).any()) {
          continue;
        }
        best = std::min(best, tight_cost(sys, F));
      }
    }
  }
  ASSERT_TRUE(std::isfinite(best));
  EXPECT_LE(solved, best + 1e-6 * std::abs(best));
  EXPECT_LE(best - solved, 1e-3 * std::max(1.0, std::abs(best)));
}

TEST(NominalMpc, ShiftConsistency) {
  const VehicleParams p;
  MpcSettings s;
  s.weights.W_E = 1e-4;
  const int N = 8;
  HorizonWindow w = flat_window(N, 15.0, 13.0, 2.5);
  for (int k = 5; k <= N; ++k) {
    w.samples[k].v_leg = 12.0;
  }
  w.samples[2].theta_nom = w.samples[2].theta_true = deg_to_rad(3.0);
  s.horizon = N;
  NominalMpc first(p, PowertrainFit{}, s);
  const auto a = first.step({kinetic_energy(14.0, p), 3.0}, w);
  ASSERT_EQ(a.status, conic::SolveStatus::kOptimal) << a.message;

  HorizonWindow next = w;
  next.samples.erase(next.samples.begin());
  next.v_lead_nom.erase(next.v_lead_nom.begin());
  s.horizon = N - 1;
  NominalMpc second(p, PowertrainFit{}, s);
  const auto b = second.step({a.states(2), a.states(3)}, next);
  ASSERT_EQ(b.status, conic::SolveStatus::kOptimal) << b.message;
  const Eigen::VectorXd shifted = a.u.tail(2 * (N - 1));
  for (int k = 0; k < N - 1; ++k) {
    EXPECT_NEAR(b.u(2 * k), shifted(2 * k), 1e-2 * p.F_t_max) << "F at " << k;
    EXPECT_NEAR(b.u(2 * k + 1), shifted(2 * k + 1), 1e-5) << "zeta at " << k;
  }
  EXPECT_NEAR(b.states(2 * (N - 1)), a.states(2 * N), 1e-4 * a.states(2 * N));
}

TEST(NominalMpc, EndOfRouteHolds) {
  const VehicleParams p;
  NominalMpc mpc(p, PowertrainFit{}, MpcSettings{});
  mpc.reset(9000.0);
  HorizonWindow w = flat_window(0, 15.0, 15.0);
  const auto out = mpc.step({kinetic_energy(15.0, p), 3.0}, w);
  EXPECT_EQ(out.message, "end of route");
  EXPECT_EQ(out.horizon, 0);
  EXPECT_DOUBLE_EQ(out.F_w, p.wheel_force_max());
  EXPECT_FALSE(out.fallback);
}

TEST(NominalMpc, RejectsEnergyBelowFloor) {
  const VehicleParams p;
  NominalMpc mpc(p, PowertrainFit{}, MpcSettings{});
  EXPECT_THROW(mpc.step({0.5 * p.energy_min(), 3.0}, flat_window(3, 15.0, 15.0)),
               std::invalid_argument);
}

TEST(NominalMpc, ZetaTightOnRandomWindows) {
  const VehicleParams p;
  std::mt19937 rng(11);
  int solved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    HorizonWindow w = random_window(rng, 11);
    NominalMpc mpc(p, PowertrainFit{}, MpcSettings{});
    const auto out = mpc.step({kinetic_energy(10.0, p), 3.0}, w);
    if (out.status != conic::SolveStatus::kOptimal) {
      continue;
    }
    ++solved;
    EXPECT_LE(out.zeta_slack, 1e-5) << "trial " << trial;
    EXPECT_GE(out.zeta_slack, -1e-7) << "trial " << trial;
  }
  EXPECT_GE(solved, 15);
}

TEST(NominalMpc, SolverFailureHoldsPreviousCommand) {
  const VehicleParams p;
  NominalMpc mpc(p, PowertrainFit{}, MpcSettings{});
  mpc.reset(-1e5);
  // Gap already at dt_max with a much faster leader: the time-gap bound cannot be met.
  HorizonWindow w = flat_window(6, 15.0, 15.0);
  w.v_lead_nom.assign(6, 40.0);
  const auto out = mpc.step({kinetic_energy(1.0, p), 7.9}, w);
  EXPECT_TRUE(out.fallback);
  EXPECT_NE(out.status, conic::SolveStatus::kOptimal);
  EXPECT_DOUBLE_EQ(out.F_w, p.wheel_force_min());
  EXPECT_NE(out.message.find("s="), std::string::npos);
}

}  // namespace
}  // namespace reacc
