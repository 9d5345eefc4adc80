#pragma once

#include <string>
#include <vector>

#include "reacc/metrics.hpp"
#include "reacc/sim.hpp"

namespace reacc {

constexpr const char* kReportSchema = "reacc-report/1";
constexpr const char* kConfigSchema = "reacc-scenario/1";

enum class ReportFormat { kJson, kCsv };

// Throws std::invalid_argument for anything but "json" or "csv".
ReportFormat parse_format(const std::string& name);

struct ReportOptions {
  // Wall-clock fields are the only run-to-run variation; off gives byte-identical output.
  bool include_timing = true;
};

// Column order of the CSV rendering, one row per report.
const std::vector<std::string>& report_csv_columns();

std::string emit_report(const std::vector<MetricsReport>& reports, ReportFormat format,
                        const ReportOptions& options = {});
// Inverse of the JSON rendering.
std::vector<MetricsReport> parse_report_json(const std::string& text);

// JSON adds a "summary" object; CSV equals emit_report on the runs.
std::string emit_monte_carlo(const MonteCarloReport& report, ReportFormat format,
                             const ReportOptions& options = {});

struct LabelledTrace {
  std::string label;
  const SimulationTrace* trace = nullptr;
};

// Long-format plot table: label,s,channel,value for v, v_lead, v_limit, F_w, F_t, F_m, dt_gap.
std::string emit_channels(const std::vector<LabelledTrace>& traces, const VehicleParams& params);

std::string scenario_to_json(const ScenarioConfig& scenario);
// Unknown keys are rejected; missing keys keep their defaults.
ScenarioConfig scenario_from_json(const std::string& text);
ScenarioConfig load_scenario_file(const std::string& path);

}  // namespace reacc
