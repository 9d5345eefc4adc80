#include "reacc/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reacc {

void PowertrainFit::validate() const {
  if (!(a1 > 0.0) || !(a3 > 0.0) || !std::isfinite(a2)) {
    throw std::invalid_argument("powertrain fit: need a1 > 0, a3 > 0 and finite a2");
  }
}

double battery_power(double F_t, double v, const PowertrainFit& fit) {
  if (!(v >= 0.0)) {
    throw std::invalid_argument("battery_power: speed must be non-negative");
  }
  return (fit.a1 * F_t * F_t + fit.a2 * F_t + fit.a3) * v;
}

double powertrain_efficiency(double F_t, double v, const PowertrainFit& fit) {
  if (!(v > 0.0)) {
    throw std::invalid_argument("powertrain_efficiency: speed must be positive");
  }
  if (F_t == 0.0) {
    return 0.0;
  }
  const double p_b = battery_power(F_t, v, fit);
  const double p_mech = F_t * v;
  if (F_t > 0.0) {
    if (p_b == 0.0) {
      throw std::domain_error("powertrain_efficiency: zero battery power while driving");
    }
    return p_mech / p_b;
  }
  return p_b / p_mech;
}

ForceSplit split_wheel_force(double F_w, const VehicleParams& params) {
  const double lo = params.wheel_force_min();
  const double hi = params.wheel_force_max();
  const double tol = 1e-9 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  if (!std::isfinite(F_w) || F_w < lo - tol || F_w > hi + tol) {
    throw std::invalid_argument("split_wheel_force: wheel force outside admissible bounds");
  }
  const double w = std::clamp(F_w, lo, hi);
  ForceSplit out;
  out.F_t = std::clamp(w, params.F_t_min, params.F_t_max);
  out.F_m = w - out.F_t;
  return out;
}

}  // namespace reacc
