#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "reacc/vehicle.hpp"

namespace reacc {

enum class CycleSource { kIngested, kSynthetic };

struct DrivingCycle {
  RoadProfile profile;
  std::vector<double> v_lead_nom;  // filtered and capped leader speed per sample
  CycleSource source = CycleSource::kIngested;
  std::optional<std::uint64_t> seed;
  double filter_cutoff = 1.0 / 200.0;

  // Profile checks plus 0 < v_lead_nom <= v_leg per sample.
  void validate(const VehicleParams& params) const;
  // Largest admissible energy per sample.
  std::vector<double> energy_limits(const VehicleParams& params) const;
  // ds / mean(v_lead_true), the mean time between samples when driving at the leader's pace.
  double mean_sample_time() const;
};

constexpr double kDefaultFilterCutoff = 1.0 / 200.0;

// Road slope range of generated cycles [deg].
constexpr double kSlopeMinDeg = -5.22;
constexpr double kSlopeMaxDeg = 7.17;

// First-order filter over the distance grid, y(0) = raw(0) and
// y(k) = y(k-1) + a (raw(k) - y(k-1)) with a = 1 - exp(-cutoff ds); then min with v_leg and
// max with v_min.
std::vector<double> filter_leader_velocity(const std::vector<double>& raw,
                                           const std::vector<double>& v_leg, double cutoff,
                                           double ds, double v_min);

class CycleLoadError : public std::runtime_error {
 public:
  // row is the 1-based data row (0 for header or file-level problems).
  CycleLoadError(std::size_t row, const std::string& what);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Header s,kappa,theta_true_deg,theta_nom_deg,v_leg,v_lead in any column order.
DrivingCycle ingest_cycle_csv(std::istream& in, const VehicleParams& params,
                              double cutoff = kDefaultFilterCutoff);
DrivingCycle ingest_cycle_csv_file(const std::string& path, const VehicleParams& params,
                                   double cutoff = kDefaultFilterCutoff);

// Writes the raw channels; importing the output reproduces every channel bit for bit.
void export_cycle_csv(const DrivingCycle& cycle, std::ostream& out);

// Shortest decimal degree value whose conversion back to radians is exactly `rad`.
double degrees_for_round_trip(double rad);

struct SynthOptions {
  double ds = 3.0;
  double cutoff = kDefaultFilterCutoff;
  std::vector<double> legal_levels = {8.94, 13.41, 17.88};
  double plateau_min = 240.0;
  double plateau_max = 600.0;
  double ramp = 60.0;
  double slope_amplitude_deg = 3.0;   // peak |theta_true| before clamping to the slope range
  double bend_probability = 0.25;     // per plateau
  double bend_kappa_max = 0.04;
  double leader_mean_share = 0.82;    // leader cruise speed as a share of its cap
  double leader_swing_share = 0.12;   // peak fluctuation as a share of its cap
  double leader_wavelength = 150.0;   // typical fluctuation wavelength [m]
  double terminal_run = 90.0;         // final stretch where the leader holds its cap
};

// Reproducible desk-scale cycle; throws std::invalid_argument unless length is a positive
// multiple of ds.
DrivingCycle synth_cycle(std::uint64_t seed, double length, const VehicleParams& params,
                         const SynthOptions& options = {});

}  // namespace reacc
