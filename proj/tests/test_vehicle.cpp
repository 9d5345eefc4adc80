#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "reacc/vehicle.hpp"

namespace reacc {
namespace {

RoadSample flat_sample(double v_lead = 10.0) {
  RoadSample x;
  x.v_leg = 30.0;
  x.v_lead_true = v_lead;
  return x;
}

TEST(KineticEnergy, WorkedValues) {
  const VehicleParams p;
  EXPECT_DOUBLE_EQ(kinetic_energy(10.0, p), 60000.0);
  EXPECT_DOUBLE_EQ(kinetic_energy(0.0, p), 0.0);
  EXPECT_DOUBLE_EQ(speed_of(60000.0, p), 10.0);
  EXPECT_THROW(kinetic_energy(-1.0, p), std::invalid_argument);
}

TEST(PlantStep, ForceEquilibriumHoldsEnergy) {
  const VehicleParams p;
  RoadSample x = flat_sample();
  x.theta_true = deg_to_rad(2.0);
  const ResistanceCoeffs c{0.35, 0.011};
  const EgoState s{kinetic_energy(12.0, p), 3.0};
  const double F = 2.0 * c.f_d * s.E / p.m + p.m * p.g * c.f_r * std::cos(x.theta_true) +
                   p.m * p.g * std::sin(x.theta_true);
  const auto r = plant_step(s, F, x, c, p, 3.0);
  EXPECT_NEAR(r.state.E, s.E, 1e-9 * s.E);
  EXPECT_FALSE(r.floored);
}

TEST(PlantStep, LossFreeWorkEqualsForceTimesDistance) {
  VehicleParams p;
  p.f_d_lo = p.f_d_nom = p.f_d_hi = 1e-300;
  p.f_r_lo = p.f_r_nom = p.f_r_hi = 1e-300;
  const EgoState s{kinetic_energy(10.0, p), 3.0};
  const auto r = plant_step(s, 1000.0, flat_sample(), {1e-300, 1e-300}, p, 3.0);
  EXPECT_NEAR(r.state.E - s.E, 3000.0, 1e-9);
}

TEST(PlantStep, SuperpositionInWheelForce) {
  const VehicleParams p;
  const RoadSample x = flat_sample();
  const ResistanceCoeffs c = nominal_coeffs(p);
  const EgoState s{kinetic_energy(15.0, p), 2.0};
  const double e0 = plant_step(s, 0.0, x, c, p, 3.0).state.E;
  const double e1 = plant_step(s, 400.0, x, c, p, 3.0).state.E;
  const double e2 = plant_step(s, 800.0, x, c, p, 3.0).state.E;
  EXPECT_NEAR(e2 - e0, 2.0 * (e1 - e0), 1e-9 * e0);
}

TEST(PlantStep, EnergyFloorIsFlagged) {
  const VehicleParams p;
  const EgoState s{kinetic_energy(1.0, p), 3.0};
  const auto r = plant_step(s, -7000.0, flat_sample(), nominal_coeffs(p), p, 3.0);
  EXPECT_TRUE(r.floored);
  EXPECT_DOUBLE_EQ(r.state.E, p.energy_min());
}

TEST(PlantStep, RejectsInvalidInputs) {
  const VehicleParams p;
  const EgoState s{kinetic_energy(10.0, p), 3.0};
  EXPECT_THROW(plant_step(s, NAN, flat_sample(), nominal_coeffs(p), p, 3.0), std::invalid_argument);
  EXPECT_THROW(plant_step(s, 0.0, flat_sample(), {0.5, 0.01}, p, 3.0), std::invalid_argument);
  EXPECT_THROW(plant_step({1e-6, 3.0}, 0.0, flat_sample(), nominal_coeffs(p), p, 3.0),
               std::invalid_argument);
}

// Classical RK4 on the continuous space-domain dynamics.
EgoState rk4(const EgoState& s0, double F, const RoadSample& x, const ResistanceCoeffs& c,
             const VehicleParams& p, double ds, int n) {
  double E = s0.E;
  double t = s0.dt_gap;
  const double h = ds / n;
  auto dE = [&](double e) {
    return F - 2.0 * c.f_d * e / p.m - p.m * p.g * c.f_r * std::cos(x.theta_true) -
           p.m * p.g * std::sin(x.theta_true);
  };
  auto dt = [&](double e) { return 1.0 / std::sqrt(2.0 * e / p.m) - 1.0 / x.v_lead_true; };
  for (int i = 0; i < n; ++i) {
    const double k1 = dE(E), l1 = dt(E);
    const double k2 = dE(E + 0.5 * h * k1), l2 = dt(E + 0.5 * h * k1);
    const double k3 = dE(E + 0.5 * h * k2), l3 = dt(E + 0.5 * h * k2);
    const double k4 = dE(E + h * k3), l4 = dt(E + h * k3);
    E += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
  }
  return {E, t};
}

TEST(PlantStep, MatchesFineIntegrationAsSpacingShrinks) {
  const VehicleParams p;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RoadSample x;
    x.v_leg = 30.0;
    x.theta_true = deg_to_rad(-5.22 + 12.39 * U(rng));
    x.v_lead_true = 3.0 + 20.0 * U(rng);
    const ResistanceCoeffs c{p.f_d_lo + (p.f_d_hi - p.f_d_lo) * U(rng),
                             p.f_r_lo + (p.f_r_hi - p.f_r_lo) * U(rng)};
    const EgoState s{kinetic_energy(3.0 + 20.0 * U(rng), p), 1.0 + 7.0 * U(rng)};
    const double F = -3500.0 + 7000.0 * U(rng);
    double prev_err = 1e300;
    for (double ds : {0.3, 0.03, 0.003}) {
      const auto euler = plant_step(s, F, x, c, p, ds).state;
      const auto ref = rk4(s, F, x, c, p, ds, 200);
      const double e_err = std::abs(euler.E - ref.E) / std::max(std::abs(ref.E - s.E), 1e-9 * s.E);
      const double scale = ds / std::sqrt(2.0 * s.E / p.m) + ds / x.v_lead_true;
      const double t_err = std::abs(euler.dt_gap - ref.dt_gap) / scale;
      const double err = std::max(e_err, t_err);
      EXPECT_LE(err, prev_err * (1.0 + 1e-6) + 1e-9);
      prev_err = err;
    }
    EXPECT_LE(prev_err, 5e-3);
  }
}

TEST(SpeedLimits, CorneringWorkedValues) {
  const VehicleParams p;
  EXPECT_NEAR(*cornering_speed_limit(0.01, p), 26.2552, 1e-4);
  EXPECT_NEAR(*cornering_speed_limit(0.04, p), 13.1276, 1e-4);
  EXPECT_NEAR(*cornering_speed_limit(0.04, p), 0.5 * *cornering_speed_limit(0.01, p), 1e-12);
  EXPECT_FALSE(cornering_speed_limit(0.0, p).has_value());
  VehicleParams bad = p;
  bad.F_t_max = 20000.0;
  EXPECT_THROW(cornering_speed_limit(0.01, bad), std::invalid_argument);
}

TEST(SpeedLimits, CombinedSelectsTighterBound) {
  const VehicleParams p;
  RoadSample x;
  x.v_leg = 20.0;
  x.kappa = 0.01;
  EXPECT_DOUBLE_EQ(combined_speed_limit(x, p), 20.0);
  x.kappa = 0.0;
  EXPECT_DOUBLE_EQ(combined_speed_limit(x, p), 20.0);
  x.v_leg = 30.0;
  x.kappa = 0.04;
  EXPECT_NEAR(combined_speed_limit(x, p), 13.1276, 1e-4);
  EXPECT_NEAR(energy_max(x, p), 0.5 * p.m * std::pow(combined_speed_limit(x, p), 2), 1e-9);
}

TEST(SpeedLimits, MonotoneInCurvature) {
  const VehicleParams p;
  RoadSample x;
  x.v_leg = 25.0;
  double prev = combined_speed_limit(x, p);
  for (int i = 1; i <= 500; ++i) {
    x.kappa = 1e-4 * i;
    const double v = combined_speed_limit(x, p);
    EXPECT_LE(v, prev);
    EXPECT_LE(v, x.v_leg);
    prev = v;
  }
}

TEST(Disturbance, ZeroMismatchGivesZero) {
  const VehicleParams p;
  RoadSample x = flat_sample();
  x.theta_nom = x.theta_true = deg_to_rad(3.0);
  EXPECT_NEAR(mismatch_disturbance_dE(kinetic_energy(12.0, p), x, nominal_coeffs(p), p), 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(leader_disturbance_dt(10.0, 10.0), 0.0);
  EXPECT_NEAR(leader_disturbance_dt(10.0, 12.0), 0.0166667, 1e-7);
  EXPECT_THROW(leader_disturbance_dt(0.0, 1.0), std::invalid_argument);
}

TEST(Disturbance, ExactDecompositionOfTrueStep) {
  const VehicleParams p;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    RoadSample x;
    x.v_leg = 30.0;
    x.v_lead_true = 10.0;
    x.theta_nom = deg_to_rad(-5.22 + 12.39 * U(rng));
    x.theta_true = x.theta_nom + p.slope_mismatch_lo +
                   (p.slope_mismatch_hi - p.slope_mismatch_lo) * U(rng);
    const ResistanceCoeffs c{p.f_d_lo + (p.f_d_hi - p.f_d_lo) * U(rng),
                             p.f_r_lo + (p.f_r_hi - p.f_r_lo) * U(rng)};
    const EgoState s{kinetic_energy(1.0 + 25.0 * U(rng), p), 3.0};
    const double F = -7800.0 + 11300.0 * U(rng);
    const double ds = 3.0;
    const double truth = plant_step(s, F, x, c, p, ds).state.E;
    RoadSample nominal = x;
    nominal.theta_true = x.theta_nom;
    const double dE = mismatch_disturbance_dE(s.E, x, c, p);
    const double nom = s.E + (F - 2.0 * p.f_d_nom * s.E / p.m -
                              p.m * p.g * p.f_r_nom * std::cos(x.theta_nom) -
                              p.m * p.g * std::sin(x.theta_nom) + dE) * ds;
    if (truth > p.energy_min()) {
      EXPECT_NEAR(nom, truth, 1e-9 * std::max(1.0, std::abs(truth)));
    }
  }
}

RoadProfile straight_profile(int n, double v_leg, double theta_deg) {
  RoadProfile prof;
  prof.ds = 3.0;
  for (int k = 0; k <= n; ++k) {
    RoadSample x;
    x.s = 3.0 * k;
    x.v_leg = v_leg;
    x.v_lead_true = 10.0 + (k % 3);
    x.theta_nom = x.theta_true = deg_to_rad(theta_deg * std::sin(0.1 * k));
    prof.samples.push_back(x);
  }
  return prof;
}

TEST(Disturbance, BoundsTableValuesAtTopSpeed) {
  const VehicleParams p;
  const RoadProfile prof = straight_profile(0, 22.22, 0.0);
  const auto b = derive_disturbance_bounds(prof, {prof.samples[0].v_lead_true}, p);
  const double v2 = 22.22 * 22.22;
  const double mg = p.m * p.g;
  const double h = deg_to_rad(0.5);
  const double lo = (p.f_d_nom - p.f_d_hi) * v2 + mg * (p.f_r_nom - p.f_r_hi * std::cos(h)) -
                    mg * std::sin(h);
  const double hi = (p.f_d_nom - p.f_d_lo) * v2 + mg * (p.f_r_nom - p.f_r_lo * std::cos(h)) +
                    mg * std::sin(h);
  EXPECT_NEAR(b.dE_lo, lo, 1e-9 * std::abs(lo));
  EXPECT_NEAR(b.dE_hi, hi, 1e-9 * std::abs(hi));
  EXPECT_NEAR(b.dE_lo, -146.02, 0.01);
  EXPECT_NEAR(b.dE_hi, 148.00, 0.01);
  EXPECT_GE(b.dE_lo, -146.28);
  EXPECT_LE(b.dE_hi, 148.20);
}

TEST(Disturbance, DegenerateBoxGivesZeroBounds) {
  VehicleParams p;
  p.f_d_lo = p.f_d_hi = p.f_d_nom;
  p.f_r_lo = p.f_r_hi = p.f_r_nom;
  p.slope_mismatch_lo = p.slope_mismatch_hi = 0.0;
  const RoadProfile prof = straight_profile(20, 20.0, 4.0);
  std::vector<double> lead;
  for (const auto& x : prof.samples) {
    lead.push_back(x.v_lead_true);
  }
  const auto b = derive_disturbance_bounds(prof, lead, p);
  EXPECT_NEAR(b.dE_lo, 0.0, 1e-9);
  EXPECT_NEAR(b.dE_hi, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(b.dt_lo, 0.0);
  EXPECT_DOUBLE_EQ(b.dt_hi, 0.0);
  EXPECT_THROW(derive_disturbance_bounds(RoadProfile{}, {}, p), std::invalid_argument);
}

TEST(Disturbance, WideningDragIntervalWidensBounds) {
  VehicleParams p;
  const RoadProfile prof = straight_profile(30, 20.0, 3.0);
  const std::vector<double> lead(prof.samples.size(), 10.0);
  auto prev = derive_disturbance_bounds(prof, lead, p);
  for (int i = 1; i <= 5; ++i) {
    p.f_d_lo = 0.296 - 0.02 * i;
    p.f_d_hi = 0.380 + 0.02 * i;
    const auto b = derive_disturbance_bounds(prof, lead, p);
    EXPECT_LE(b.dE_lo, prev.dE_lo);
    EXPECT_GE(b.dE_hi, prev.dE_hi);
    prev = b;
  }
}

TEST(Disturbance, BoundsEncloseDenseGridSearch) {
  const VehicleParams p;
  const RoadProfile prof = straight_profile(40, 18.0, 5.0);
  std::vector<double> lead;
  for (const auto& x : prof.samples) {
    lead.push_back(x.v_lead_true * 0.95);
  }
  const auto b = derive_disturbance_bounds(prof, lead, p);
  double lo = 1e300;
  double hi = -1e300;
  const double e_top = 0.5 * p.m * 18.0 * 18.0;
  for (const auto& x : prof.samples) {
    for (int i = 0; i <= 40; ++i) {
      const double E = p.energy_min() + (e_top - p.energy_min()) * i / 40.0;
      for (int a = 0; a <= 6; ++a) {
        for (int r = 0; r <= 6; ++r) {
          for (int t = 0; t <= 6; ++t) {
            RoadSample y = x;
            y.theta_true = x.theta_nom + p.slope_mismatch_lo +
                           (p.slope_mismatch_hi - p.slope_mismatch_lo) * t / 6.0;
            const ResistanceCoeffs c{p.f_d_lo + (p.f_d_hi - p.f_d_lo) * a / 6.0,
                                     p.f_r_lo + (p.f_r_hi - p.f_r_lo) * r / 6.0};
            const double d = mismatch_disturbance_dE(E, y, c, p);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
          }
        }
      }
    }
  }
  EXPECT_NEAR(b.dE_lo, lo, 1e-6 * std::abs(lo));
  EXPECT_NEAR(b.dE_hi, hi, 1e-6 * std::abs(hi));
  double tlo = 1e300;
  double thi = -1e300;
  for (std::size_t k = 0; k < lead.size(); ++k) {
    const double d = 1.0 / lead[k] - 1.0 / prof.samples[k].v_lead_true;
    tlo = std::min(tlo, d);
    thi = std::max(thi, d);
  }
  EXPECT_DOUBLE_EQ(b.dt_lo, tlo);
  EXPECT_DOUBLE_EQ(b.dt_hi, thi);
}

TEST(RoadProfileValidation, RejectsBrokenGrids) {
  const VehicleParams p;
  RoadProfile prof = straight_profile(5, 20.0, 1.0);
  EXPECT_NO_THROW(prof.validate(p));
  EXPECT_DOUBLE_EQ(prof.length(), 15.0);
  prof.samples[3].s += 0.5;
  EXPECT_THROW(prof.validate(p), std::invalid_argument);
  prof = straight_profile(5, 20.0, 1.0);
  prof.samples[2].theta_true += deg_to_rad(1.0);
  EXPECT_THROW(prof.validate(p), std::invalid_argument);
}

TEST(VehicleParamsValidation, DefaultsAreValid) {
  VehicleParams p;
  EXPECT_NO_THROW(p.validate());
  p.dt_min = 9.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace reacc
