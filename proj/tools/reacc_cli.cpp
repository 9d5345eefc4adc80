#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reacc/cycle.hpp"
#include "reacc/metrics.hpp"
#include "reacc/presets.hpp"
#include "reacc/report.hpp"
#include "reacc/sim.hpp"

namespace {

using namespace reacc;

constexpr int kExitViolation = 2;

struct Common {
  std::string cycle_path;
  std::string config_path;
  std::string controller;
  std::string policy;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "json";
  bool no_timing = false;
};

void add_common(CLI::App* app, Common& c, bool with_controller) {
  app->add_option("--cycle", c.cycle_path, "Cycle CSV (default: built-in acceptance cycle)")
      ->check(CLI::ExistingFile);
  app->add_option("--config", c.config_path, "Scenario JSON (default: acceptance scenario)")
      ->check(CLI::ExistingFile);
  if (with_controller) {
    app->add_option("--controller", c.controller, "reacc, nominal or cdfs")
        ->check(CLI::IsMember({"reacc", "nominal", "cdfs"}));
  }
  app->add_option("--policy", c.policy, "Disturbance policy: uniform, adversarial or zero")
      ->check(CLI::IsMember({"uniform", "adversarial", "zero"}));
  app->add_option("--horizon", c.horizon, "Prediction horizon N")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "Disturbance seed (first seed for mc)");
  app->add_option("--out", c.out, "Output file (default: stdout)");
  app->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  app->add_flag("--no-timing", c.no_timing, "Zero wall-clock fields for byte-stable output");
}

struct Setup {
  DrivingCycle cycle;
  ScenarioConfig scenario;
};

Setup resolve(const Common& c) {
  Setup s;
  const VehicleParams defaults;
  s.scenario = c.config_path.empty() ? ScenarioConfig{} : load_scenario_file(c.config_path);
  const VehicleParams& p = c.config_path.empty() ? defaults : s.scenario.vehicle;
  s.cycle = c.cycle_path.empty() ? acceptance_cycle(p) : ingest_cycle_csv_file(c.cycle_path, p);
  if (c.config_path.empty()) {
    s.scenario = acceptance_scenario(s.cycle);
  }
  if (!c.controller.empty()) {
    s.scenario.controller = parse_controller(c.controller);
  }
  if (!c.policy.empty()) {
    s.scenario.policy = parse_policy(c.policy);
  }
  if (c.horizon) {
    s.scenario.horizon = *c.horizon;
    if (s.scenario.closing) {
      s.scenario.closing->steps = *c.horizon;
    }
  }
  if (c.seed) {
    s.scenario.seed = *c.seed;
  }
  return s;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path + "'");
  }
  out << text;
}

std::string sci(double value) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << value;
  return os.str();
}

ReportOptions report_options(const Common& c) { return ReportOptions{!c.no_timing}; }

int run_cmd(const Common& c, const std::string& channels) {
  const Setup s = resolve(c);
  const SimulationTrace trace = run_closed_loop(s.cycle, s.scenario);
  const MetricsReport r = compute_metrics(trace, s.scenario.powertrain, s.scenario.vehicle);
  write_output(c.out, emit_report({r}, parse_format(c.format), report_options(c)));
  if (!channels.empty()) {
    write_output(channels, emit_channels({{to_string(trace.controller), &trace}},
                                         s.scenario.vehicle));
  }
  if (trace.aborted) {
    std::cerr << trace.diagnostic << "\n";
  }
  const bool robust = s.scenario.controller == ControllerKind::kReacc;
  return robust && (r.violations.total() > 0 || r.aborted) ? kExitViolation : 0;
}

int compare_cmd(const Common& c, const std::vector<std::string>& controllers,
                const std::string& channels) {
  const Setup s = resolve(c);
  std::vector<SimulationTrace> traces;
  std::vector<MetricsReport> reports;
  int code = 0;
  for (const std::string& name : controllers) {
    ScenarioConfig sc = s.scenario;
    sc.controller = parse_controller(name);
    traces.push_back(run_closed_loop(s.cycle, sc));
    reports.push_back(compute_metrics(traces.back(), sc.powertrain, sc.vehicle));
    if (sc.controller == ControllerKind::kReacc &&
        (reports.back().violations.total() > 0 || reports.back().aborted)) {
      code = kExitViolation;
    }
  }
  write_output(c.out, emit_report(reports, parse_format(c.format), report_options(c)));
  if (!channels.empty()) {
    std::vector<LabelledTrace> labelled;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      labelled.push_back({controllers[i], &traces[i]});
    }
    write_output(channels, emit_channels(labelled, s.scenario.vehicle));
  }
  return code;
}

int mc_cmd(const Common& c, std::size_t seeds, unsigned threads) {
  const Setup s = resolve(c);
  const MonteCarloReport mc = monte_carlo(s.cycle, s.scenario, seeds, threads);
  write_output(c.out, emit_monte_carlo(mc, parse_format(c.format), report_options(c)));
  const bool robust = s.scenario.controller == ControllerKind::kReacc;
  return robust && (mc.total_violations > 0 || mc.aborted_runs > 0) ? kExitViolation : 0;
}

int synth_cmd(std::uint64_t seed, double length, bool preset, const std::string& out) {
  const VehicleParams p;
  const SynthOptions options = preset ? acceptance_synth_options() : SynthOptions{};
  const DrivingCycle cycle = synth_cycle(seed, length, p, options);
  std::ostringstream os;
  export_cycle_csv(cycle, os);
  write_output(out, os.str());
  return 0;
}

int check_cmd(const Common& c) {
  const Setup s = resolve(c);
  const VehicleParams& p = s.scenario.vehicle;
  int failures = 0;
  const auto line = [&](bool ok, const std::string& what, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << what << " (" << detail << ")\n";
    failures += ok ? 0 : 1;
  };
  s.cycle.validate(p);
  line(true, "cycle", std::to_string(s.cycle.profile.steps()) + " intervals");

  const SimulationTrace trace = run_closed_loop(s.cycle, s.scenario);
  const MetricsReport r = compute_metrics(trace, s.scenario.powertrain, p);
  line(!trace.aborted, "run completes", trace.aborted ? trace.diagnostic : "ok");

  double split = 0.0;
  for (const TraceStep& st : trace.steps) {
    split = std::max(split, std::abs(st.F_t + st.F_m - st.F_w));
  }
  line(split <= 1e-9, "force split", "max |F_t + F_m - F_w| = " + sci(split));
  line(r.conservation_residual <= 5e-3, "energy bookkeeping",
       "residual " + sci(r.conservation_residual));
  const double min_loss = std::min({r.losses.rolling, r.losses.air_drag, r.losses.propulsion,
                                    r.losses.regeneration, r.losses.mech_braking});
  line(min_loss >= 0.0, "losses non-negative", "smallest category " + sci(min_loss) + " J");
  if (s.scenario.controller != ControllerKind::kCdfs) {
    line(r.max_zeta_slack <= 1e-5, "zeta tightness", "max slack " + sci(r.max_zeta_slack));
  }
  if (s.scenario.controller == ControllerKind::kReacc) {
    line(r.violations.total() == 0, "no constraint violations",
         std::to_string(r.violations.total()) + " violations");
    line(r.losses.mech_braking == 0.0, "no mechanical braking",
         sci(r.losses.mech_braking) + " J");
  }
  const ReportOptions stable{false};
  const std::string again = emit_report(
      {compute_metrics(run_closed_loop(s.cycle, s.scenario), s.scenario.powertrain, p)},
      ReportFormat::kJson, stable);
  line(again == emit_report({r}, ReportFormat::kJson, stable), "determinism",
       "re-run report identical");
  return failures == 0 ? 0 : kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust eco adaptive cruise control simulator"};
  app.require_subcommand(1);

  Common run_opts;
  std::string run_channels;
  CLI::App* run = app.add_subcommand("run", "Simulate one scenario and print its metrics");
  add_common(run, run_opts, true);
  run->add_option("--channels", run_channels, "Write the long-format channel table here");

  Common cmp_opts;
  std::vector<std::string> controllers = {"cdfs", "nominal", "reacc"};
  std::string cmp_channels;
  CLI::App* compare =
      app.add_subcommand("compare", "Run several controllers on one seed-pinned disturbance set");
  add_common(compare, cmp_opts, false);
  compare->add_option("--controllers", controllers, "Controllers to compare")
      ->check(CLI::IsMember({"reacc", "nominal", "cdfs"}))
      ->delimiter(',');
  compare->add_option("--channels", cmp_channels, "Write the long-format channel table here");

  Common mc_opts;
  std::size_t seeds = 100;
  unsigned threads = 0;
  CLI::App* mc = app.add_subcommand("mc", "Monte-Carlo campaign over consecutive seeds");
  add_common(mc, mc_opts, true);
  mc->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  mc->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  std::uint64_t synth_seed = kAcceptanceCycleSeed;
  double length = kAcceptanceCycleLength;
  bool preset = false;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic cycle CSV");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--length", length, "Route length [m], a multiple of 3")
      ->check(CLI::PositiveNumber);
  synth->add_flag("--acceptance", preset, "Use the acceptance cycle generator options");
  synth->add_option("--out", synth_out, "Output file (default: stdout)");

  Common check_opts;
  CLI::App* check = app.add_subcommand("check", "Run the invariant suite on one scenario");
  add_common(check, check_opts, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      return run_cmd(run_opts, run_channels);
    }
    if (*compare) {
      return compare_cmd(cmp_opts, controllers, cmp_channels);
    }
    if (*mc) {
      return mc_cmd(mc_opts, seeds, threads);
    }
    if (*synth) {
      return synth_cmd(synth_seed, length, preset, synth_out);
    }
    return check_cmd(check_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
