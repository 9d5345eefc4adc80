#include "reacc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "reacc/nominal_mpc.hpp"

namespace reacc {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kReacc:
      return "reacc";
    case ControllerKind::kNominal:
      return "nominal";
    case ControllerKind::kCdfs:
      return "cdfs";
  }
  return "unknown";
}

std::string to_string(DisturbancePolicy policy) {
  switch (policy) {
    case DisturbancePolicy::kUniform:
      return "uniform";
    case DisturbancePolicy::kAdversarial:
      return "adversarial";
    case DisturbancePolicy::kZero:
      return "zero";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  if (name == "reacc") {
    return ControllerKind::kReacc;
  }
  if (name == "nominal") {
    return ControllerKind::kNominal;
  }
  if (name == "cdfs") {
    return ControllerKind::kCdfs;
  }
  throw std::invalid_argument("unknown controller '" + name + "' (reacc, nominal, cdfs)");
}

DisturbancePolicy parse_policy(const std::string& name) {
  if (name == "uniform") {
    return DisturbancePolicy::kUniform;
  }
  if (name == "adversarial") {
    return DisturbancePolicy::kAdversarial;
  }
  if (name == "zero") {
    return DisturbancePolicy::kZero;
  }
  throw std::invalid_argument("unknown disturbance policy '" + name +
                              "' (uniform, adversarial, zero)");
}

void ScenarioConfig::validate() const {
  if (horizon < 1) {
    throw std::invalid_argument("scenario: horizon must be >= 1");
  }
  if (!(ds > 0.0) || !std::isfinite(ds)) {
    throw std::invalid_argument("scenario: ds must be positive");
  }
  vehicle.validate();
  powertrain.validate();
  weights.validate();
  if (!(v0 >= vehicle.v_min)) {
    throw std::invalid_argument("scenario: v0 must be >= v_min");
  }
  if (!std::isfinite(dt0) || !std::isfinite(gap_ref)) {
    throw std::invalid_argument("scenario: non-finite time gap");
  }
  if (closing) {
    if (closing->steps < 0) {
      throw std::invalid_argument("scenario: closing steps must be >= 0");
    }
    closing->weights.validate();
  }
  if (box && (box->dE_lo > box->dE_hi || box->dt_lo > box->dt_hi)) {
    throw std::invalid_argument("scenario: disturbance box has lo > hi");
  }
}

std::vector<StepTruth> disturbance_sequence(const DrivingCycle& cycle,
                                            const ScenarioConfig& scenario) {
  const VehicleParams& p = scenario.vehicle;
  std::mt19937_64 rng(scenario.seed);
  std::vector<StepTruth> out;
  out.reserve(cycle.profile.samples.size());
  for (std::size_t k = 0; k < cycle.profile.samples.size(); ++k) {
    const RoadSample& x = cycle.profile.samples[k];
    StepTruth t;
    switch (scenario.policy) {
      case DisturbancePolicy::kUniform:
        t.coeffs.f_d = p.f_d_lo + (p.f_d_hi - p.f_d_lo) * unit(rng);
        t.coeffs.f_r = p.f_r_lo + (p.f_r_hi - p.f_r_lo) * unit(rng);
        t.theta_true = x.theta_true;
        t.v_lead_true = x.v_lead_true;
        break;
      case DisturbancePolicy::kAdversarial:
        t.coeffs = {p.f_d_lo, p.f_r_lo};
        t.theta_true = x.theta_nom + p.slope_mismatch_lo;
        t.v_lead_true = x.v_lead_true;
        break;
      case DisturbancePolicy::kZero:
        t.coeffs = nominal_coeffs(p);
        t.theta_true = x.theta_nom;
        t.v_lead_true = cycle.v_lead_nom[k];
        break;
    }
    out.push_back(t);
  }
  return out;
}

DisturbanceBounds resolve_box(const DrivingCycle& cycle, const ScenarioConfig& scenario) {
  if (scenario.box) {
    return *scenario.box;
  }
  DisturbanceBounds b;
  b.dE_lo = kDefaultDeLo;
  b.dE_hi = kDefaultDeHi;
  for (std::size_t k = 0; k < cycle.profile.samples.size(); ++k) {
    const double dt = leader_disturbance_dt(cycle.v_lead_nom[k], cycle.profile.samples[k].v_lead_true);
    b.dt_lo = std::min(b.dt_lo, dt);
    b.dt_hi = std::max(b.dt_hi, dt);
  }
  return b;
}

CdfsCommand cdfs_controller(const EgoState& measurement, const RoadSample& here,
                            double next_leader_speed, const VehicleParams& params, double ds) {
  if (!(next_leader_speed > 0.0)) {
    throw std::invalid_argument("cdfs: leader speed must be positive");
  }
  if (!(ds > 0.0)) {
    throw std::invalid_argument("cdfs: ds must be positive");
  }
  const double m = params.m;
  const double resistance = 2.0 * params.f_d_nom * measurement.E / m +
                            m * params.g * params.f_r_nom * std::cos(here.theta_nom) +
                            m * params.g * std::sin(here.theta_nom);
  const double target = kinetic_energy(next_leader_speed, params);
  const double wanted = (target - measurement.E) / ds + resistance;
  CdfsCommand out;
  out.F_w = std::clamp(wanted, params.wheel_force_min(), params.wheel_force_max());
  out.clipped = out.F_w != wanted;
  return out;
}

SimulationTrace run_closed_loop(const DrivingCycle& cycle, const ScenarioConfig& scenario) {
  scenario.validate();
  const VehicleParams& p = scenario.vehicle;
  cycle.validate(p);
  if (std::abs(cycle.profile.ds - scenario.ds) > 1e-9 * scenario.ds) {
    throw std::invalid_argument("run_closed_loop: cycle spacing differs from scenario ds");
  }
  const auto truths = disturbance_sequence(cycle, scenario);
  const double ds = scenario.ds;
  const std::size_t K = cycle.profile.steps();

  SimulationTrace trace;
  trace.controller = scenario.controller;
  trace.policy = scenario.policy;
  trace.seed = scenario.seed;
  trace.horizon = scenario.horizon;
  trace.ds = ds;
  trace.steps.reserve(K);

  MpcSettings settings;
  settings.horizon = scenario.horizon;
  settings.weights = scenario.weights;
  settings.solver = scenario.solver;
  std::optional<NominalMpc> nominal;
  std::optional<RobustMpc> robust;
  if (scenario.controller == ControllerKind::kNominal) {
    nominal.emplace(p, scenario.powertrain, settings);
  } else if (scenario.controller == ControllerKind::kReacc) {
    robust.emplace(p, scenario.powertrain, settings, resolve_box(cycle, scenario),
                   scenario.zeta_energy);
  }

  EgoState x{kinetic_energy(scenario.v0, p), scenario.dt0};
  bool closing_active = false;
  std::size_t k = 0;
  for (; k < K; ++k) {
    if (!closing_active && scenario.closing &&
        K - k <= static_cast<std::size_t>(scenario.closing->steps)) {
      closing_active = true;
      if (nominal) {
        nominal->set_weights(scenario.closing->weights);
      } else if (robust) {
        robust->set_weights(scenario.closing->weights);
      }
    }
    const RoadSample& here = cycle.profile.samples[k];
    const StepTruth& truth = truths[k];
    RoadSample actual = here;
    actual.theta_true = truth.theta_true;
    actual.v_lead_true = truth.v_lead_true;

    TraceStep st;
    st.s = here.s;
    st.E = x.E;
    st.v = speed_of(x.E, p);
    st.dt_gap = x.dt_gap;
    st.E_max = energy_max(here, p);
    st.f_d = truth.coeffs.f_d;
    st.f_r = truth.coeffs.f_r;
    st.theta_true = truth.theta_true;
    st.v_lead_true = truth.v_lead_true;
    st.d_E = mismatch_disturbance_dE(x.E, actual, truth.coeffs, p);
    st.d_t = leader_disturbance_dt(cycle.v_lead_nom[k], truth.v_lead_true);

    try {
      if (scenario.controller == ControllerKind::kCdfs) {
        const CdfsCommand cmd = cdfs_controller(x, here, truths[k + 1].v_lead_true, p, ds);
        st.F_w = cmd.F_w;
        st.clipped = cmd.clipped;
        st.feasible = !cmd.clipped;
      } else {
        const HorizonWindow window =
            window_at(cycle.profile, cycle.v_lead_nom, k, scenario.horizon, scenario.gap_ref);
        StepOutcome out;
        bool certified = true;
        if (nominal) {
          out = nominal->step(x, window);
        } else {
          RobustStep r = robust->step(x, window);
          out = std::move(r.outcome);
          certified = r.certificate && r.certificate->psd_verified;
        }
        st.F_w = out.F_w;
        st.fallback = out.fallback;
        st.feasible = out.status == conic::SolveStatus::kOptimal && !out.fallback && certified;
        st.solve_time = out.solve_time;
        st.zeta_slack = out.zeta_slack;
        if (out.fallback) {
          st.note = out.message;
        }
      }
      const ForceSplit split = split_wheel_force(st.F_w, p);
      st.F_t = split.F_t;
      st.F_m = split.F_m;
      const PlantStepResult next = plant_step(x, st.F_w, actual, truth.coeffs, p, ds);
      st.floored = next.floored;
      trace.steps.push_back(st);
      x = next.state;
    } catch (const std::exception& e) {
      trace.aborted = true;
      trace.diagnostic = "aborted at s=" + std::to_string(here.s) + ": " + e.what();
      break;
    }
  }
  const RoadSample& last = cycle.profile.samples[k];
  trace.terminal.s = last.s;
  trace.terminal.E = x.E;
  trace.terminal.v = speed_of(x.E, p);
  trace.terminal.dt_gap = x.dt_gap;
  trace.terminal.E_max = energy_max(last, p);
  return trace;
}

}  // namespace reacc
