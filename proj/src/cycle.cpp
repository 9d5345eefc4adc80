#include "reacc/cycle.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace reacc {

namespace {

const std::array<std::string, 6> kColumns = {"s",     "kappa", "theta_true_deg", "theta_nom_deg",
                                             "v_leg", "v_lead"};

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    out.push_back(trim(field));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

std::optional<double> parse_number(const std::string& text) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string shortest(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

// Uniform in [0, 1) from the top 53 bits, identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

struct Wave {
  double weight;
  double wavelength;
  double phase;
};

double wave_sum(const std::vector<Wave>& waves, double s) {
  double out = 0.0;
  for (const auto& w : waves) {
    out += w.weight * std::sin(2.0 * kPi * s / w.wavelength + w.phase);
  }
  return out;
}

// Weights normalised to sum 1 so |wave_sum| <= 1.
std::vector<Wave> random_waves(std::mt19937_64& rng, const std::vector<std::array<double, 3>>& spec) {
  std::vector<Wave> out;
  double total = 0.0;
  for (const auto& [weight, lo, hi] : spec) {
    out.push_back({weight, uniform(rng, lo, hi), uniform(rng, 0.0, 2.0 * kPi)});
    total += weight;
  }
  for (auto& w : out) {
    w.weight /= total;
  }
  return out;
}

double interpolate(const std::vector<std::pair<double, double>>& knots, double s) {
  if (s <= knots.front().first) {
    return knots.front().second;
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (s <= knots[i].first) {
      const auto& [s0, v0] = knots[i - 1];
      const auto& [s1, v1] = knots[i];
      return s1 > s0 ? v0 + (v1 - v0) * (s - s0) / (s1 - s0) : v1;
    }
  }
  return knots.back().second;
}

}  // namespace

void DrivingCycle::validate(const VehicleParams& params) const {
  profile.validate(params);
  if (v_lead_nom.size() != profile.samples.size()) {
    throw std::invalid_argument("driving cycle: leader prediction length mismatch");
  }
  for (std::size_t k = 0; k < v_lead_nom.size(); ++k) {
    if (!(v_lead_nom[k] > 0.0) || v_lead_nom[k] > profile.samples[k].v_leg) {
      throw std::invalid_argument("driving cycle: sample " + std::to_string(k) +
                                  ": predicted leader speed outside (0, v_leg]");
    }
  }
}

std::vector<double> DrivingCycle::energy_limits(const VehicleParams& params) const {
  std::vector<double> out;
  out.reserve(profile.samples.size());
  for (const auto& x : profile.samples) {
    out.push_back(energy_max(x, params));
  }
  return out;
}

double DrivingCycle::mean_sample_time() const {
  if (profile.samples.empty()) {
    throw std::invalid_argument("driving cycle: empty profile");
  }
  double sum = 0.0;
  for (const auto& x : profile.samples) {
    sum += x.v_lead_true;
  }
  return profile.ds / (sum / static_cast<double>(profile.samples.size()));
}

std::vector<double> filter_leader_velocity(const std::vector<double>& raw,
                                           const std::vector<double>& v_leg, double cutoff,
                                           double ds, double v_min) {
  if (raw.size() != v_leg.size()) {
    throw std::invalid_argument("filter_leader_velocity: length mismatch");
  }
  if (!(cutoff > 0.0) || !(ds > 0.0)) {
    throw std::invalid_argument("filter_leader_velocity: cutoff and ds must be positive");
  }
  for (double v : raw) {
    if (!(v > 0.0)) {
      throw std::invalid_argument("filter_leader_velocity: raw speeds must be positive");
    }
  }
  const double a = -std::expm1(-cutoff * ds);
  std::vector<double> out(raw.size());
  double y = raw.empty() ? 0.0 : raw.front();
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (k > 0) {
      y += a * (raw[k] - y);
    }
    out[k] = std::max(std::min(y, v_leg[k]), v_min);
  }
  return out;
}

CycleLoadError::CycleLoadError(std::size_t row, const std::string& what)
    : std::runtime_error(row == 0 ? "cycle csv: " + what
                                  : "cycle csv: row " + std::to_string(row) + ": " + what),
      row_(row) {}

DrivingCycle ingest_cycle_csv(std::istream& in, const VehicleParams& params, double cutoff) {
  std::string line;
  if (!std::getline(in, line)) {
    throw CycleLoadError(0, "empty input");
  }
  const auto header = split_fields(line);
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < header.size(); ++i) {
    where[header[i]] = i;
  }
  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    const auto it = where.find(kColumns[c]);
    if (it == where.end()) {
      throw CycleLoadError(0, "missing column '" + kColumns[c] + "'");
    }
    col[c] = it->second;
  }

  DrivingCycle cycle;
  cycle.source = CycleSource::kIngested;
  cycle.filter_cutoff = cutoff;
  std::vector<double> raw;
  std::vector<double> legal;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw CycleLoadError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(fields.size()));
    }
    std::array<double, kColumns.size()> v{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      const auto num = parse_number(fields[col[c]]);
      if (!num) {
        throw CycleLoadError(row, "column '" + kColumns[c] + "' is not a finite number");
      }
      v[c] = *num;
    }
    RoadSample x;
    x.s = v[0];
    x.kappa = v[1];
    x.theta_true = deg_to_rad(v[2]);
    x.theta_nom = deg_to_rad(v[3]);
    x.v_leg = v[4];
    x.v_lead_true = v[5];
    if (x.kappa < 0.0) {
      throw CycleLoadError(row, "negative curvature");
    }
    if (!(x.v_leg > 0.0)) {
      throw CycleLoadError(row, "non-positive v_leg");
    }
    if (!(x.v_lead_true > 0.0)) {
      throw CycleLoadError(row, "non-positive v_lead");
    }
    const double mismatch = x.theta_true - x.theta_nom;
    if (mismatch < params.slope_mismatch_lo - 1e-12 || mismatch > params.slope_mismatch_hi + 1e-12) {
      throw CycleLoadError(row, "slope mismatch outside the configured bound");
    }
    auto& samples = cycle.profile.samples;
    if (samples.empty() && x.s != 0.0) {
      throw CycleLoadError(row, "grid must start at s=0");
    }
    if (samples.size() == 1) {
      cycle.profile.ds = x.s - samples.front().s;
      if (!(cycle.profile.ds > 0.0)) {
        throw CycleLoadError(row, "s must increase");
      }
    }
    if (samples.size() >= 2) {
      const double expected = cycle.profile.ds * static_cast<double>(samples.size());
      if (std::abs(x.s - expected) > 1e-9 * std::max(1.0, std::abs(expected))) {
        throw CycleLoadError(row, "non-uniform grid (expected s=" + shortest(expected) + ")");
      }
    }
    samples.push_back(x);
    raw.push_back(x.v_lead_true);
    legal.push_back(x.v_leg);
  }
  if (cycle.profile.samples.size() < 2) {
    throw CycleLoadError(0, "need at least two data rows");
  }
  cycle.v_lead_nom =
      filter_leader_velocity(raw, legal, cutoff, cycle.profile.ds, params.v_min);
  try {
    cycle.validate(params);
  } catch (const std::invalid_argument& e) {
    throw CycleLoadError(0, e.what());
  }
  return cycle;
}

DrivingCycle ingest_cycle_csv_file(const std::string& path, const VehicleParams& params,
                                   double cutoff) {
  std::ifstream in(path);
  if (!in) {
    throw CycleLoadError(0, "cannot open '" + path + "'");
  }
  return ingest_cycle_csv(in, params, cutoff);
}

double degrees_for_round_trip(double rad) {
  const double deg = rad_to_deg(rad);
  for (int digits = 1; digits <= 17; ++digits) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), deg,
                                   std::chars_format::general, digits);
    double parsed = 0.0;
    std::from_chars(buf.data(), res.ptr, parsed);
    if (deg_to_rad(parsed) == rad) {
      return parsed;
    }
  }
  double up = deg;
  double down = deg;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, INFINITY);
    down = std::nextafter(down, -INFINITY);
    if (deg_to_rad(up) == rad) {
      return up;
    }
    if (deg_to_rad(down) == rad) {
      return down;
    }
  }
  return deg;
}

void export_cycle_csv(const DrivingCycle& cycle, std::ostream& out) {
  out << "s,kappa,theta_true_deg,theta_nom_deg,v_leg,v_lead\n";
  for (const auto& x : cycle.profile.samples) {
    out << shortest(x.s) << ',' << shortest(x.kappa) << ','
        << shortest(degrees_for_round_trip(x.theta_true)) << ','
        << shortest(degrees_for_round_trip(x.theta_nom)) << ',' << shortest(x.v_leg) << ','
        << shortest(x.v_lead_true) << '\n';
  }
}

DrivingCycle synth_cycle(std::uint64_t seed, double length, const VehicleParams& params,
                         const SynthOptions& options) {
  if (!(options.ds > 0.0) || !(length > 0.0) || !std::isfinite(length)) {
    throw std::invalid_argument("synth_cycle: length and ds must be positive");
  }
  const double steps_real = length / options.ds;
  const auto steps = static_cast<std::size_t>(std::llround(steps_real));
  if (steps < 1 || std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * steps_real) {
    throw std::invalid_argument("synth_cycle: length must be a multiple of ds");
  }
  if (options.legal_levels.empty()) {
    throw std::invalid_argument("synth_cycle: no legal speed levels");
  }
  std::mt19937_64 rng(seed);
  const auto pick_level = [&](std::optional<std::size_t> avoid) {
    const std::size_t n = options.legal_levels.size();
    std::size_t i = std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n)), n - 1);
    if (avoid && n > 1 && i == *avoid) {
      i = (i + 1 + std::min(static_cast<std::size_t>(unit(rng) * static_cast<double>(n - 1)),
                            n - 2)) %
          n;
    }
    return i;
  };

  // Legal speed knots and bend centres.
  std::vector<std::pair<double, double>> knots;
  struct Bend {
    double centre;
    double half_width;
    double peak;
  };
  std::vector<Bend> bends;
  std::size_t level = pick_level(std::nullopt);
  double pos = 0.0;
  knots.emplace_back(0.0, options.legal_levels[level]);
  while (pos < length) {
    const double plateau = uniform(rng, options.plateau_min, options.plateau_max);
    if (unit(rng) < options.bend_probability) {
      bends.push_back({pos + 0.5 * plateau, 45.0, uniform(rng, 0.4, 1.0) * options.bend_kappa_max});
    }
    pos += plateau;
    knots.emplace_back(pos, options.legal_levels[level]);
    level = pick_level(level);
    pos += options.ramp;
    knots.emplace_back(pos, options.legal_levels[level]);
  }

  const auto slope_waves =
      random_waves(rng, {{0.6, 400.0, 1200.0}, {0.3, 150.0, 400.0}, {0.1, 60.0, 150.0}});
  const double wl = options.leader_wavelength;
  const auto leader_waves =
      random_waves(rng, {{0.5, 1.5 * wl, 3.0 * wl}, {0.35, 0.7 * wl, 1.5 * wl}, {0.15, 0.3 * wl, 0.7 * wl}});

  DrivingCycle cycle;
  cycle.source = CycleSource::kSynthetic;
  cycle.seed = seed;
  cycle.filter_cutoff = options.cutoff;
  cycle.profile.ds = options.ds;
  std::vector<double> raw;
  std::vector<double> legal;
  for (std::size_t k = 0; k <= steps; ++k) {
    RoadSample x;
    x.s = options.ds * static_cast<double>(k);
    x.v_leg = interpolate(knots, x.s);
    for (const auto& b : bends) {
      const double u = (x.s - b.centre) / b.half_width;
      if (std::abs(u) < 1.0) {
        const double c = std::cos(0.5 * kPi * u);
        x.kappa = std::max(x.kappa, b.peak * c * c);
      }
    }
    const double theta_deg = std::clamp(options.slope_amplitude_deg * wave_sum(slope_waves, x.s),
                                        kSlopeMinDeg, kSlopeMaxDeg);
    x.theta_true = deg_to_rad(theta_deg);
    x.theta_nom = deg_to_rad(std::round(theta_deg));
    const double cap = combined_speed_limit(x, params);
    double share =
        options.leader_mean_share + options.leader_swing_share * wave_sum(leader_waves, x.s);
    const double to_end = length - x.s;
    if (options.terminal_run > 0.0 && to_end < options.terminal_run) {
      const double blend = 1.0 - to_end / options.terminal_run;
      share += (1.0 - share) * blend;
    }
    x.v_lead_true = std::max(std::min(share, 1.0) * cap, params.v_min);
    cycle.profile.samples.push_back(x);
    raw.push_back(x.v_lead_true);
    legal.push_back(x.v_leg);
  }
  cycle.v_lead_nom =
      filter_leader_velocity(raw, legal, options.cutoff, options.ds, params.v_min);
  cycle.validate(params);
  return cycle;
}

}  // namespace reacc
