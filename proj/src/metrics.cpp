#include "reacc/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

namespace reacc {

namespace {

double rms(const std::vector<double>& values) {
  if (values.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v * v;
  }
  return std::sqrt(sum / static_cast<double>(values.size()));
}

void count_state(ViolationCounts& c, double E, double E_max, double dt_gap,
                 const VehicleParams& params) {
  if (E > E_max * (1.0 + 1e-9)) {
    ++c.energy_hi;
  }
  if (dt_gap < params.dt_min - 1e-9) {
    ++c.gap_lo;
  }
  if (dt_gap > params.dt_max + 1e-9) {
    ++c.gap_hi;
  }
}

}  // namespace

MetricsReport compute_metrics(const SimulationTrace& trace, const PowertrainFit& fit,
                              const VehicleParams& params) {
  MetricsReport r;
  r.controller = to_string(trace.controller);
  r.policy = to_string(trace.policy);
  r.seed = trace.seed;
  r.horizon = trace.horizon;
  r.steps = trace.steps.size();
  r.aborted = trace.aborted;
  r.diagnostic = trace.diagnostic;
  r.terminal_speed = trace.terminal.v;
  r.max_energy_excess = -std::numeric_limits<double>::infinity();
  const double ds = trace.ds;
  const double m = params.m;
  const double g = params.g;
  if (trace.steps.empty()) {
    r.initial_speed = trace.terminal.v;
    r.max_energy_excess = trace.terminal.E - trace.terminal.E_max;
    return r;
  }
  r.initial_speed = trace.steps.front().v;
  r.distance = ds * static_cast<double>(trace.steps.size());

  std::vector<double> accel;
  std::vector<double> dts;
  double solve_sum = 0.0;
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const TraceStep& st = trace.steps[k];
    if (st.v < params.v_min * (1.0 - 1e-12)) {
      r.low_speed = true;
    }
    const double v = std::max(st.v, std::numeric_limits<double>::min());
    const double dt = ds / v;
    dts.push_back(dt);
    r.travel_time += dt;
    const double p_b = battery_power(st.F_t, st.v, fit);
    r.E_b += p_b * dt;
    r.losses.rolling += m * g * st.f_r * std::cos(st.theta_true) * ds;
    r.losses.air_drag += 2.0 * st.f_d * st.E / m * ds;
    const double conversion = (p_b - st.F_t * st.v) * dt;
    if (st.F_t >= 0.0) {
      r.losses.propulsion += conversion;
    } else {
      r.losses.regeneration += conversion;
    }
    r.losses.mech_braking += std::abs(st.F_m) * ds;
    r.delta_potential += m * g * std::sin(st.theta_true) * ds;

    const double v_next = k + 1 < trace.steps.size() ? trace.steps[k + 1].v : trace.terminal.v;
    accel.push_back((v_next - st.v) / dt);

    if (k > 0) {
      count_state(r.violations, st.E, st.E_max, st.dt_gap, params);
    }
    r.max_energy_excess = std::max(r.max_energy_excess, st.E - st.E_max);
    if (st.floored) {
      ++r.floored_steps;
      ++r.violations.energy_lo;
    }
    r.fallback_steps += st.fallback ? 1 : 0;
    r.infeasible_steps += st.feasible ? 0 : 1;
    r.clipped_steps += st.clipped ? 1 : 0;
    r.max_zeta_slack = std::max(r.max_zeta_slack, st.zeta_slack);
    solve_sum += st.solve_time;
    r.max_solve_time = std::max(r.max_solve_time, st.solve_time);
  }
  count_state(r.violations, trace.terminal.E, trace.terminal.E_max, trace.terminal.dt_gap, params);
  r.max_energy_excess = std::max(r.max_energy_excess, trace.terminal.E - trace.terminal.E_max);
  r.mean_solve_time = solve_sum / static_cast<double>(trace.steps.size());

  std::vector<double> jerk;
  for (std::size_t k = 0; k + 1 < accel.size(); ++k) {
    jerk.push_back((accel[k + 1] - accel[k]) / dts[k]);
  }
  r.rms_accel = rms(accel);
  r.rms_jerk = rms(jerk);

  r.delta_kinetic = trace.terminal.E - trace.steps.front().E;
  const double balance = r.delta_kinetic + r.delta_potential + r.losses.total();
  r.conservation_residual =
      std::abs(r.E_b - balance) / std::max(std::abs(r.E_b), std::numeric_limits<double>::min());
  return r;
}

MonteCarloReport aggregate(std::vector<MetricsReport> runs) {
  MonteCarloReport out;
  out.runs = std::move(runs);
  if (out.runs.empty()) {
    return out;
  }
  double eb = 0.0;
  double st = 0.0;
  for (const auto& r : out.runs) {
    const std::size_t v = r.violations.total();
    out.total_violations += v;
    out.runs_with_violations += v > 0 ? 1 : 0;
    out.total_fallbacks += r.fallback_steps;
    out.aborted_runs += r.aborted ? 1 : 0;
    eb += r.E_b;
    st += r.mean_solve_time;
    out.max_zeta_slack = std::max(out.max_zeta_slack, r.max_zeta_slack);
    out.max_solve_time = std::max(out.max_solve_time, r.max_solve_time);
  }
  const double n = static_cast<double>(out.runs.size());
  out.mean_E_b = eb / n;
  out.mean_solve_time = st / n;
  return out;
}

MonteCarloReport monte_carlo(const DrivingCycle& cycle, const ScenarioConfig& scenario,
                             std::size_t n_seeds, unsigned threads) {
  if (n_seeds < 1) {
    throw std::invalid_argument("monte_carlo: need at least one seed");
  }
  scenario.validate();
  cycle.validate(scenario.vehicle);
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_seeds));

  std::vector<MetricsReport> runs(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n_seeds; i = next++) {
      try {
        ScenarioConfig sc = scenario;
        sc.seed = scenario.seed + i;
        const SimulationTrace trace = run_closed_loop(cycle, sc);
        runs[i] = compute_metrics(trace, sc.powertrain, sc.vehicle);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return aggregate(std::move(runs));
}

}  // namespace reacc
