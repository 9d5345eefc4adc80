#include "reacc/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace reacc {

namespace {

using Json = nlohmann::ordered_json;

std::string num(double value) {
  if (!std::isfinite(value)) {
    return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  }
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) {
    return text;
  }
  std::string out = "\"";
  for (char c : text) {
    out += c == '"' ? std::string("\"\"") : std::string(1, c);
  }
  return out + "\"";
}

Json losses_json(const LossBreakdown& l) {
  Json j;
  j["rolling"] = l.rolling;
  j["air_drag"] = l.air_drag;
  j["propulsion"] = l.propulsion;
  j["regeneration"] = l.regeneration;
  j["mech_braking"] = l.mech_braking;
  return j;
}

Json violations_json(const ViolationCounts& v) {
  Json j;
  j["energy_hi"] = v.energy_hi;
  j["energy_lo"] = v.energy_lo;
  j["gap_lo"] = v.gap_lo;
  j["gap_hi"] = v.gap_hi;
  return j;
}

Json metrics_json(const MetricsReport& r, const ReportOptions& o) {
  Json j;
  j["controller"] = r.controller;
  j["policy"] = r.policy;
  j["seed"] = r.seed;
  j["horizon"] = r.horizon;
  j["steps"] = r.steps;
  j["distance"] = r.distance;
  j["travel_time"] = r.travel_time;
  j["E_b"] = r.E_b;
  j["rms_accel"] = r.rms_accel;
  j["rms_jerk"] = r.rms_jerk;
  j["losses"] = losses_json(r.losses);
  j["delta_kinetic"] = r.delta_kinetic;
  j["delta_potential"] = r.delta_potential;
  j["conservation_residual"] = r.conservation_residual;
  j["mean_solve_time"] = o.include_timing ? r.mean_solve_time : 0.0;
  j["max_solve_time"] = o.include_timing ? r.max_solve_time : 0.0;
  j["violations"] = violations_json(r.violations);
  j["fallback_steps"] = r.fallback_steps;
  j["infeasible_steps"] = r.infeasible_steps;
  j["clipped_steps"] = r.clipped_steps;
  j["floored_steps"] = r.floored_steps;
  j["max_zeta_slack"] = r.max_zeta_slack;
  j["initial_speed"] = r.initial_speed;
  j["terminal_speed"] = r.terminal_speed;
  j["max_energy_excess"] = r.max_energy_excess;
  j["low_speed"] = r.low_speed;
  j["aborted"] = r.aborted;
  j["diagnostic"] = r.diagnostic;
  return j;
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport r;
  r.controller = j.at("controller").get<std::string>();
  r.policy = j.at("policy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.horizon = j.at("horizon").get<int>();
  r.steps = j.at("steps").get<std::size_t>();
  r.distance = j.at("distance").get<double>();
  r.travel_time = j.at("travel_time").get<double>();
  r.E_b = j.at("E_b").get<double>();
  r.rms_accel = j.at("rms_accel").get<double>();
  r.rms_jerk = j.at("rms_jerk").get<double>();
  const Json& l = j.at("losses");
  r.losses.rolling = l.at("rolling").get<double>();
  r.losses.air_drag = l.at("air_drag").get<double>();
  r.losses.propulsion = l.at("propulsion").get<double>();
  r.losses.regeneration = l.at("regeneration").get<double>();
  r.losses.mech_braking = l.at("mech_braking").get<double>();
  r.delta_kinetic = j.at("delta_kinetic").get<double>();
  r.delta_potential = j.at("delta_potential").get<double>();
  r.conservation_residual = j.at("conservation_residual").get<double>();
  r.mean_solve_time = j.at("mean_solve_time").get<double>();
  r.max_solve_time = j.at("max_solve_time").get<double>();
  const Json& v = j.at("violations");
  r.violations.energy_hi = v.at("energy_hi").get<std::size_t>();
  r.violations.energy_lo = v.at("energy_lo").get<std::size_t>();
  r.violations.gap_lo = v.at("gap_lo").get<std::size_t>();
  r.violations.gap_hi = v.at("gap_hi").get<std::size_t>();
  r.fallback_steps = j.at("fallback_steps").get<std::size_t>();
  r.infeasible_steps = j.at("infeasible_steps").get<std::size_t>();
  r.clipped_steps = j.at("clipped_steps").get<std::size_t>();
  r.floored_steps = j.at("floored_steps").get<std::size_t>();
  r.max_zeta_slack = j.at("max_zeta_slack").get<double>();
  r.initial_speed = j.at("initial_speed").get<double>();
  r.terminal_speed = j.at("terminal_speed").get<double>();
  r.max_energy_excess = j.at("max_energy_excess").get<double>();
  r.low_speed = j.at("low_speed").get<bool>();
  r.aborted = j.at("aborted").get<bool>();
  r.diagnostic = j.at("diagnostic").get<std::string>();
  return r;
}

std::vector<std::string> csv_row(const MetricsReport& r, const ReportOptions& o) {
  const auto b = [](bool x) { return std::string(x ? "1" : "0"); };
  return {r.controller,
          r.policy,
          std::to_string(r.seed),
          std::to_string(r.horizon),
          std::to_string(r.steps),
          num(r.distance),
          num(r.travel_time),
          num(r.E_b),
          num(r.rms_accel),
          num(r.rms_jerk),
          num(r.losses.rolling),
          num(r.losses.air_drag),
          num(r.losses.propulsion),
          num(r.losses.regeneration),
          num(r.losses.mech_braking),
          num(r.delta_kinetic),
          num(r.delta_potential),
          num(r.conservation_residual),
          num(o.include_timing ? r.mean_solve_time : 0.0),
          num(o.include_timing ? r.max_solve_time : 0.0),
          std::to_string(r.violations.energy_hi),
          std::to_string(r.violations.energy_lo),
          std::to_string(r.violations.gap_lo),
          std::to_string(r.violations.gap_hi),
          std::to_string(r.fallback_steps),
          std::to_string(r.infeasible_steps),
          std::to_string(r.clipped_steps),
          std::to_string(r.floored_steps),
          num(r.max_zeta_slack),
          num(r.initial_speed),
          num(r.terminal_speed),
          num(r.max_energy_excess),
          b(r.low_speed),
          b(r.aborted),
          csv_field(r.diagnostic)};
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    out += (i ? "," : "") + fields[i];
  }
  return out;
}

// Reads known keys of an object and rejects the rest.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw std::invalid_argument(where_ + ": expected an object");
    }
  }

  template <typename T>
  void read(const std::string& key, T& target) {
    seen_.push_back(key);
    if (j_.contains(key)) {
      try {
        target = j_.at(key).get<T>();
      } catch (const Json::exception& e) {
        throw std::invalid_argument(where_ + "." + key + ": " + e.what());
      }
    }
  }

  const Json* child(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end()) {
        throw std::invalid_argument(where_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace

ReportFormat parse_format(const std::string& name) {
  if (name == "json") {
    return ReportFormat::kJson;
  }
  if (name == "csv") {
    return ReportFormat::kCsv;
  }
  throw std::invalid_argument("unknown report format '" + name + "' (json, csv)");
}

const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> columns = {
      "controller",        "policy",          "seed",
      "horizon",           "steps",           "distance",
      "travel_time",       "E_b",             "rms_accel",
      "rms_jerk",          "loss_rolling",    "loss_air_drag",
      "loss_propulsion",   "loss_regeneration", "loss_mech_braking",
      "delta_kinetic",     "delta_potential", "conservation_residual",
      "mean_solve_time",   "max_solve_time",  "viol_energy_hi",
      "viol_energy_lo",    "viol_gap_lo",     "viol_gap_hi",
      "fallback_steps",    "infeasible_steps", "clipped_steps",
      "floored_steps",     "max_zeta_slack",  "initial_speed",
      "terminal_speed",    "max_energy_excess", "low_speed",
      "aborted",           "diagnostic"};
  return columns;
}

std::string emit_report(const std::vector<MetricsReport>& reports, ReportFormat format,
                        const ReportOptions& options) {
  if (format == ReportFormat::kJson) {
    Json doc;
    doc["schema"] = kReportSchema;
    doc["reports"] = Json::array();
    for (const auto& r : reports) {
      doc["reports"].push_back(metrics_json(r, options));
    }
    return doc.dump(2) + "\n";
  }
  std::string out = std::string("# ") + kReportSchema + "\n" + join(report_csv_columns()) + "\n";
  for (const auto& r : reports) {
    out += join(csv_row(r, options)) + "\n";
  }
  return out;
}

std::vector<MetricsReport> parse_report_json(const std::string& text) {
  const Json doc = Json::parse(text);
  if (doc.value("schema", std::string()) != kReportSchema) {
    throw std::invalid_argument("report: schema must be " + std::string(kReportSchema));
  }
  std::vector<MetricsReport> out;
  for (const auto& r : doc.at("reports")) {
    out.push_back(metrics_from_json(r));
  }
  return out;
}

std::string emit_monte_carlo(const MonteCarloReport& report, ReportFormat format,
                             const ReportOptions& options) {
  if (format == ReportFormat::kCsv) {
    return emit_report(report.runs, format, options);
  }
  Json doc = Json::parse(emit_report(report.runs, format, options));
  Json s;
  s["seeds"] = report.runs.size();
  s["total_violations"] = report.total_violations;
  s["runs_with_violations"] = report.runs_with_violations;
  s["total_fallbacks"] = report.total_fallbacks;
  s["aborted_runs"] = report.aborted_runs;
  s["mean_E_b"] = report.mean_E_b;
  s["max_zeta_slack"] = report.max_zeta_slack;
  s["mean_solve_time"] = options.include_timing ? report.mean_solve_time : 0.0;
  s["max_solve_time"] = options.include_timing ? report.max_solve_time : 0.0;
  doc["summary"] = s;
  return doc.dump(2) + "\n";
}

std::string emit_channels(const std::vector<LabelledTrace>& traces, const VehicleParams& params) {
  std::ostringstream out;
  out << "label,s,channel,value\n";
  for (const auto& lt : traces) {
    if (lt.trace == nullptr) {
      throw std::invalid_argument("emit_channels: null trace");
    }
    const std::string label = csv_field(lt.label);
    auto row = [&](double s, const char* channel, double value) {
      out << label << ',' << num(s) << ',' << channel << ',' << num(value) << '\n';
    };
    for (const auto& st : lt.trace->steps) {
      row(st.s, "v", st.v);
      row(st.s, "v_lead", st.v_lead_true);
      row(st.s, "v_limit", std::sqrt(2.0 * st.E_max / params.m));
      row(st.s, "F_w", st.F_w);
      row(st.s, "F_t", st.F_t);
      row(st.s, "F_m", st.F_m);
      row(st.s, "dt_gap", st.dt_gap);
    }
    const auto& t = lt.trace->terminal;
    row(t.s, "v", t.v);
    row(t.s, "v_limit", std::sqrt(2.0 * t.E_max / params.m));
    row(t.s, "dt_gap", t.dt_gap);
  }
  return out.str();
}

namespace {

void read_weights(const Json& j, const std::string& where, ControllerWeights& w) {
  StrictObject o(j, where);
  o.read("W_E", w.W_E);
  o.read("W_F", w.W_F);
  o.read("W_zeta", w.W_zeta);
  o.read("W_dt", w.W_dt);
  o.finish();
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& sc) {
  Json j;
  j["schema"] = kConfigSchema;
  j["controller"] = to_string(sc.controller);
  j["policy"] = to_string(sc.policy);
  j["seed"] = sc.seed;
  j["horizon"] = sc.horizon;
  j["ds"] = sc.ds;
  j["v0"] = sc.v0;
  j["dt0"] = sc.dt0;
  j["gap_ref"] = sc.gap_ref;
  j["weights"] = {{"W_E", sc.weights.W_E},
                  {"W_F", sc.weights.W_F},
                  {"W_zeta", sc.weights.W_zeta},
                  {"W_dt", sc.weights.W_dt}};
  if (sc.box) {
    j["box"] = {{"dE_lo", sc.box->dE_lo},
                {"dE_hi", sc.box->dE_hi},
                {"dt_lo", sc.box->dt_lo},
                {"dt_hi", sc.box->dt_hi}};
  } else {
    j["box"] = nullptr;
  }
  if (sc.closing) {
    j["closing"] = {{"steps", sc.closing->steps},
                    {"weights",
                     {{"W_E", sc.closing->weights.W_E},
                      {"W_F", sc.closing->weights.W_F},
                      {"W_zeta", sc.closing->weights.W_zeta},
                      {"W_dt", sc.closing->weights.W_dt}}}};
  } else {
    j["closing"] = nullptr;
  }
  j["zeta_energy"] = sc.zeta_energy == ZetaEnergy::kWorstCaseLow ? "worst_case_low" : "nominal";
  j["solver"] = {{"feas_tol", sc.solver.feas_tol},
                 {"gap_tol", sc.solver.gap_tol},
                 {"max_iterations", sc.solver.max_iterations}};
  const VehicleParams& p = sc.vehicle;
  j["vehicle"] = {{"m", p.m},
                  {"g", p.g},
                  {"f_d_nom", p.f_d_nom},
                  {"f_r_nom", p.f_r_nom},
                  {"f_d_lo", p.f_d_lo},
                  {"f_d_hi", p.f_d_hi},
                  {"f_r_lo", p.f_r_lo},
                  {"f_r_hi", p.f_r_hi},
                  {"a_x_max", p.a_x_max},
                  {"a_y_max", p.a_y_max},
                  {"v_min", p.v_min},
                  {"F_t_min", p.F_t_min},
                  {"F_t_max", p.F_t_max},
                  {"F_m_min", p.F_m_min},
                  {"dt_min", p.dt_min},
                  {"dt_max", p.dt_max},
                  {"slope_mismatch_lo_deg", degrees_for_round_trip(p.slope_mismatch_lo)},
                  {"slope_mismatch_hi_deg", degrees_for_round_trip(p.slope_mismatch_hi)}};
  j["powertrain"] = {{"a1", sc.powertrain.a1}, {"a2", sc.powertrain.a2}, {"a3", sc.powertrain.a3}};
  return j.dump(2) + "\n";
}

ScenarioConfig scenario_from_json(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  ScenarioConfig sc;
  StrictObject top(doc, "scenario");
  std::string schema = kConfigSchema;
  top.read("schema", schema);
  if (schema != kConfigSchema) {
    throw std::invalid_argument("scenario: schema must be " + std::string(kConfigSchema));
  }
  std::string controller = to_string(sc.controller);
  std::string policy = to_string(sc.policy);
  top.read("controller", controller);
  top.read("policy", policy);
  sc.controller = parse_controller(controller);
  sc.policy = parse_policy(policy);
  top.read("seed", sc.seed);
  top.read("horizon", sc.horizon);
  top.read("ds", sc.ds);
  top.read("v0", sc.v0);
  top.read("dt0", sc.dt0);
  top.read("gap_ref", sc.gap_ref);
  if (const Json* w = top.child("weights")) {
    read_weights(*w, "scenario.weights", sc.weights);
  }
  if (const Json* b = top.child("box"); b && !b->is_null()) {
    DisturbanceBounds box;
    StrictObject o(*b, "scenario.box");
    o.read("dE_lo", box.dE_lo);
    o.read("dE_hi", box.dE_hi);
    o.read("dt_lo", box.dt_lo);
    o.read("dt_hi", box.dt_hi);
    o.finish();
    sc.box = box;
  }
  if (const Json* c = top.child("closing"); c && !c->is_null()) {
    ClosingPhase closing;
    closing.weights = sc.weights;
    StrictObject o(*c, "scenario.closing");
    o.read("steps", closing.steps);
    if (const Json* w = o.child("weights")) {
      read_weights(*w, "scenario.closing.weights", closing.weights);
    }
    o.finish();
    sc.closing = closing;
  }
  std::string zeta = "worst_case_low";
  top.read("zeta_energy", zeta);
  if (zeta == "worst_case_low") {
    sc.zeta_energy = ZetaEnergy::kWorstCaseLow;
  } else if (zeta == "nominal") {
    sc.zeta_energy = ZetaEnergy::kNominal;
  } else {
    throw std::invalid_argument("scenario.zeta_energy: expected worst_case_low or nominal");
  }
  if (const Json* s = top.child("solver")) {
    StrictObject o(*s, "scenario.solver");
    o.read("feas_tol", sc.solver.feas_tol);
    o.read("gap_tol", sc.solver.gap_tol);
    o.read("max_iterations", sc.solver.max_iterations);
    o.finish();
  }
  if (const Json* v = top.child("vehicle")) {
    VehicleParams& p = sc.vehicle;
    StrictObject o(*v, "scenario.vehicle");
    o.read("m", p.m);
    o.read("g", p.g);
    o.read("f_d_nom", p.f_d_nom);
    o.read("f_r_nom", p.f_r_nom);
    o.read("f_d_lo", p.f_d_lo);
    o.read("f_d_hi", p.f_d_hi);
    o.read("f_r_lo", p.f_r_lo);
    o.read("f_r_hi", p.f_r_hi);
    o.read("a_x_max", p.a_x_max);
    o.read("a_y_max", p.a_y_max);
    o.read("v_min", p.v_min);
    o.read("F_t_min", p.F_t_min);
    o.read("F_t_max", p.F_t_max);
    o.read("F_m_min", p.F_m_min);
    o.read("dt_min", p.dt_min);
    o.read("dt_max", p.dt_max);
    double lo = rad_to_deg(p.slope_mismatch_lo);
    double hi = rad_to_deg(p.slope_mismatch_hi);
    const bool has_lo = v->contains("slope_mismatch_lo_deg");
    const bool has_hi = v->contains("slope_mismatch_hi_deg");
    o.read("slope_mismatch_lo_deg", lo);
    o.read("slope_mismatch_hi_deg", hi);
    if (has_lo) {
      p.slope_mismatch_lo = deg_to_rad(lo);
    }
    if (has_hi) {
      p.slope_mismatch_hi = deg_to_rad(hi);
    }
    o.finish();
  }
  if (const Json* pt = top.child("powertrain")) {
    StrictObject o(*pt, "scenario.powertrain");
    o.read("a1", sc.powertrain.a1);
    o.read("a2", sc.powertrain.a2);
    o.read("a3", sc.powertrain.a3);
    o.finish();
  }
  top.finish();
  sc.validate();
  return sc;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open scenario file '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

}  // namespace reacc
