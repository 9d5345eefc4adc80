#include "reacc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace reacc {

namespace {

void require(bool condition, const std::string& message) {
  if (!condition) {
    throw std::invalid_argument(message);
  }
}

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void VehicleParams::validate() const {
  require(all_finite({m, g, f_d_nom, f_r_nom, f_d_lo, f_d_hi, f_r_lo, f_r_hi, a_x_max, a_y_max,
                      v_min, F_t_min, F_t_max, F_m_min, dt_min, dt_max, slope_mismatch_lo,
                      slope_mismatch_hi}),
          "vehicle params: non-finite value");
  require(m > 0.0, "vehicle params: mass must be positive");
  require(g > 0.0, "vehicle params: gravity must be positive");
  require(0.0 < f_d_lo && f_d_lo <= f_d_nom && f_d_nom <= f_d_hi,
          "vehicle params: need 0 < f_d_lo <= f_d_nom <= f_d_hi");
  require(0.0 < f_r_lo && f_r_lo <= f_r_nom && f_r_nom <= f_r_hi,
          "vehicle params: need 0 < f_r_lo <= f_r_nom <= f_r_hi");
  require(F_t_min < 0.0 && F_t_max > 0.0, "vehicle params: need F_t_min < 0 < F_t_max");
  require(F_m_min <= 0.0, "vehicle params: F_m_min must be <= 0");
  require(v_min > 0.0, "vehicle params: v_min must be positive");
  require(dt_min < dt_max, "vehicle params: need dt_min < dt_max");
  require(a_x_max > 0.0 && a_y_max > 0.0, "vehicle params: acceleration limits must be positive");
  require(slope_mismatch_lo <= slope_mismatch_hi, "vehicle params: slope mismatch interval inverted");
}

void RoadProfile::validate(const VehicleParams& params) const {
  require(std::isfinite(ds) && ds > 0.0, "road profile: spacing must be positive");
  require(samples.size() >= 2, "road profile: need at least two samples");
  const double tol = 1e-9 * std::max(1.0, ds);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& x = samples[k];
    const std::string where = "road profile: sample " + std::to_string(k) + ": ";
    require(all_finite({x.s, x.kappa, x.theta_true, x.theta_nom, x.v_leg, x.v_lead_true}),
            where + "non-finite value");
    require(std::abs(x.s - ds * static_cast<double>(k)) <= tol * static_cast<double>(k + 1),
            where + "grid is not uniform from s=0");
    require(x.kappa >= 0.0, where + "negative curvature");
    require(x.v_leg > 0.0, where + "non-positive legal speed");
    require(x.v_lead_true > 0.0, where + "non-positive leader speed");
    const double mismatch = x.theta_true - x.theta_nom;
    require(mismatch >= params.slope_mismatch_lo - 1e-12 &&
                mismatch <= params.slope_mismatch_hi + 1e-12,
            where + "slope mismatch outside configured bound");
  }
}

double kinetic_energy(double v, const VehicleParams& params) {
  if (!(v >= 0.0)) {
    throw std::invalid_argument("kinetic_energy: speed must be non-negative");
  }
  return 0.5 * params.m * v * v;
}

double speed_of(double E, const VehicleParams& params) {
  if (!(E >= 0.0)) {
    throw std::invalid_argument("speed_of: energy must be non-negative");
  }
  return std::sqrt(2.0 * E / params.m);
}

ResistanceCoeffs nominal_coeffs(const VehicleParams& params) {
  return {params.f_d_nom, params.f_r_nom};
}

PlantStepResult plant_step(const EgoState& state, double F_w, const RoadSample& sample,
                           const ResistanceCoeffs& real, const VehicleParams& params, double ds) {
  require(all_finite({state.E, state.dt_gap, F_w, sample.theta_true, sample.v_lead_true, real.f_d,
                      real.f_r, ds}),
          "plant_step: non-finite input");
  require(real.f_d >= params.f_d_lo && real.f_d <= params.f_d_hi,
          "plant_step: air-drag coefficient outside its bounds");
  require(real.f_r >= params.f_r_lo && real.f_r <= params.f_r_hi,
          "plant_step: rolling coefficient outside its bounds");
  require(ds > 0.0, "plant_step: spacing must be positive");
  require(sample.v_lead_true > 0.0, "plant_step: leader speed must be positive");
  const double v = std::sqrt(2.0 * std::max(state.E, 0.0) / params.m);
  require(v >= params.v_min * (1.0 - 1e-12), "plant_step: speed below v_min");

  const double m = params.m;
  const double g = params.g;
  const double theta = sample.theta_true;
  const double resistance =
      2.0 * real.f_d * state.E / m + m * g * real.f_r * std::cos(theta) + m * g * std::sin(theta);

  PlantStepResult out;
  out.state.E = state.E + (F_w - resistance) * ds;
  out.state.dt_gap = state.dt_gap + (1.0 / v - 1.0 / sample.v_lead_true) * ds;
  if (out.state.E < params.energy_min()) {
    out.state.E = params.energy_min();
    out.floored = true;
  }
  return out;
}

std::optional<double> cornering_speed_limit(double kappa, const VehicleParams& params) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw std::invalid_argument("cornering_speed_limit: curvature must be finite and >= 0");
  }
  const double share = 1.0 - (params.F_t_max / params.m) / params.a_x_max;
  if (share < 0.0) {
    throw std::invalid_argument(
        "cornering_speed_limit: F_t_max/m exceeds a_x_max (negative radicand)");
  }
  if (kappa == 0.0) {
    return std::nullopt;
  }
  return std::sqrt(share * params.a_y_max / kappa);
}

double combined_speed_limit(const RoadSample& sample, const VehicleParams& params) {
  require(sample.v_leg > 0.0 && std::isfinite(sample.v_leg),
          "combined_speed_limit: legal speed must be positive");
  const auto corner = cornering_speed_limit(sample.kappa, params);
  return corner ? std::min(sample.v_leg, *corner) : sample.v_leg;
}

double energy_max(const RoadSample& sample, const VehicleParams& params) {
  const double v = combined_speed_limit(sample, params);
  return 0.5 * params.m * v * v;
}

double mismatch_disturbance_dE(double E, const RoadSample& sample, const ResistanceCoeffs& real,
                               const VehicleParams& params) {
  const double m = params.m;
  const double g = params.g;
  const double th_nom = sample.theta_nom;
  const double th = sample.theta_true;
  return (params.f_d_nom - real.f_d) * 2.0 * E / m + m * g * params.f_r_nom * std::cos(th_nom) +
         m * g * std::sin(th_nom) - m * g * real.f_r * std::cos(th) - m * g * std::sin(th);
}

double leader_disturbance_dt(double v_lead_nom, double v_lead_true) {
  if (!(v_lead_nom > 0.0) || !(v_lead_true > 0.0)) {
    throw std::invalid_argument("leader_disturbance_dt: leader speeds must be positive");
  }
  return 1.0 / v_lead_nom - 1.0 / v_lead_true;
}

DisturbanceBounds derive_disturbance_bounds(const RoadProfile& profile,
                                            const std::vector<double>& v_lead_nom,
                                            const VehicleParams& params,
                                            const BoundsSearchOptions& options) {
  if (profile.samples.empty()) {
    throw std::invalid_argument("derive_disturbance_bounds: empty profile");
  }
  if (v_lead_nom.size() != profile.samples.size()) {
    throw std::invalid_argument("derive_disturbance_bounds: leader length mismatch");
  }
  double e_top = 0.0;
  if (options.energy_top) {
    e_top = *options.energy_top;
  } else {
    for (const auto& x : profile.samples) {
      e_top = std::max(e_top, energy_max(x, params));
    }
  }
  const double e_bot = params.energy_min();
  e_top = std::max(e_top, e_bot);
  const std::size_t grid = std::max<std::size_t>(options.energy_grid, 2);

  DisturbanceBounds out;
  bool first = true;
  const double f_d[2] = {params.f_d_lo, params.f_d_hi};
  const double f_r[2] = {params.f_r_lo, params.f_r_hi};
  const double mis[2] = {params.slope_mismatch_lo, params.slope_mismatch_hi};
  for (const auto& x : profile.samples) {
    for (std::size_t i = 0; i < grid; ++i) {
      const double E =
          e_bot + (e_top - e_bot) * static_cast<double>(i) / static_cast<double>(grid - 1);
      for (double fd : f_d) {
        for (double fr : f_r) {
          for (double dth : mis) {
            RoadSample corner = x;
            corner.theta_true = x.theta_nom + dth;
            const double dE = mismatch_disturbance_dE(E, corner, {fd, fr}, params);
            if (first) {
              out.dE_lo = out.dE_hi = dE;
              first = false;
            } else {
              out.dE_lo = std::min(out.dE_lo, dE);
              out.dE_hi = std::max(out.dE_hi, dE);
            }
          }
        }
      }
    }
  }
  for (std::size_t k = 0; k < profile.samples.size(); ++k) {
    const double dt = leader_disturbance_dt(v_lead_nom[k], profile.samples[k].v_lead_true);
    if (k == 0) {
      out.dt_lo = out.dt_hi = dt;
    } else {
      out.dt_lo = std::min(out.dt_lo, dt);
      out.dt_hi = std::max(out.dt_hi, dt);
    }
  }
  return out;
}

}  // namespace reacc
