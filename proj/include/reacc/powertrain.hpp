#pragma once

#include "reacc/vehicle.hpp"

namespace reacc {

// Battery terminal power P_b = (a1 F_t^2 + a2 F_t + a3) v.
struct PowertrainFit {
  double a1 = 6.31e-5;
  double a2 = 1.046;
  double a3 = 115.2;

  void validate() const;
};

struct ForceSplit {
  double F_t = 0.0;
  double F_m = 0.0;
};

double battery_power(double F_t, double v, const PowertrainFit& fit);

// F_t v / P_b when driving, P_b / (F_t v) when recharging, 0 at F_t = 0.
double powertrain_efficiency(double F_t, double v, const PowertrainFit& fit);

// Regeneration first: the powertrain absorbs as much of F_w as its bounds allow.
ForceSplit split_wheel_force(double F_w, const VehicleParams& params);

}  // namespace reacc
