#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace reacc {

constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct VehicleParams {
  double m = 1200.0;
  double g = 9.81;
  double f_d_nom = 0.34;
  double f_r_nom = 0.01;
  double f_d_lo = 0.296;
  double f_d_hi = 0.380;
  double f_r_lo = 0.008;
  double f_r_hi = 0.012;
  double a_x_max = 9.81;
  double a_y_max = 9.81;
  double v_min = 0.1;
  double F_t_min = -3500.0;
  double F_t_max = 3500.0;
  double F_m_min = -4300.0;
  double dt_min = 1.0;
  double dt_max = 8.0;
  // Admissible |theta_true - theta_nom| interval [rad].
  double slope_mismatch_lo = deg_to_rad(-0.5);
  double slope_mismatch_hi = deg_to_rad(0.5);

  // Throws std::invalid_argument on a violated invariant.
  void validate() const;

  double energy_min() const { return 0.5 * m * v_min * v_min; }
  double wheel_force_min() const { return F_t_min + F_m_min; }
  double wheel_force_max() const { return F_t_max; }
};

struct RoadSample {
  double s = 0.0;
  double kappa = 0.0;
  double theta_true = 0.0;
  double theta_nom = 0.0;
  double v_leg = 0.0;
  double v_lead_true = 0.0;
};

struct RoadProfile {
  double ds = 3.0;
  std::vector<RoadSample> samples;

  // Number of intervals k_s; samples.size() == k_s + 1.
  std::size_t steps() const { return samples.empty() ? 0 : samples.size() - 1; }
  double length() const { return ds * static_cast<double>(steps()); }

  // Checks grid uniformity, coverage and per-sample invariants.
  void validate(const VehicleParams& params) const;
};

struct EgoState {
  double E = 0.0;
  double dt_gap = 0.0;
};

struct ResistanceCoeffs {
  double f_d = 0.0;
  double f_r = 0.0;
};

struct DisturbanceBounds {
  double dE_lo = 0.0;
  double dE_hi = 0.0;
  double dt_lo = 0.0;
  double dt_hi = 0.0;
};

struct DisturbanceRealization {
  double d_E = 0.0;
  double d_t = 0.0;
};

struct PlantStepResult {
  EgoState state;
  bool floored = false;
};

double kinetic_energy(double v, const VehicleParams& params);
double speed_of(double E, const VehicleParams& params);

ResistanceCoeffs nominal_coeffs(const VehicleParams& params);

// Forward-Euler step over ds with the true coefficients, slope and leader speed of `sample`.
PlantStepResult plant_step(const EgoState& state, double F_w, const RoadSample& sample,
                           const ResistanceCoeffs& real, const VehicleParams& params, double ds);

// nullopt means no cornering bound (straight road).
std::optional<double> cornering_speed_limit(double kappa, const VehicleParams& params);
double combined_speed_limit(const RoadSample& sample, const VehicleParams& params);
double energy_max(const RoadSample& sample, const VehicleParams& params);

double mismatch_disturbance_dE(double E, const RoadSample& sample, const ResistanceCoeffs& real,
                               const VehicleParams& params);
double leader_disturbance_dt(double v_lead_nom, double v_lead_true);

struct BoundsSearchOptions {
  std::size_t energy_grid = 64;
  // Upper end of the E range; defaults to the largest E_max over the profile.
  std::optional<double> energy_top;
};

DisturbanceBounds derive_disturbance_bounds(const RoadProfile& profile,
                                            const std::vector<double>& v_lead_nom,
                                            const VehicleParams& params,
                                            const BoundsSearchOptions& options = {});

}  // namespace reacc
