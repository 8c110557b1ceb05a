#pragma once

// Scenario documents, bundled presets, trace export and summary reports.
//
// Scenario files are JSON with a "format"/"version" header. Every physical
// quantity carries its unit in the key name (gap_mm, capacitance_F, ...).
// Omitted optional fields take the defaults of the in-memory config types.

#include "ppd/sim_engine.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ppd {

inline constexpr const char* kScenarioFormat = "ppd-scenario";
inline constexpr int kScenarioVersion = 1;

struct OutputOptions {
    std::string trace_csv;    // empty: not written
    std::string trace_json;   // empty: not written
    std::string summary;      // empty: not written
};

struct Scenario {
    std::string name;
    Topology topology;
    ControlConfig control;
    SimConfig sim;
    OutputOptions outputs;
    /// Routers allowed to sit below threshold in this scenario (e.g. a
    /// wireless receiver with its transmitter out of range).
    std::vector<std::string> threshold_exempt;
    double transient = 50e-3;  // s excluded from threshold checks
};

/// Parses a scenario document. Throws ParseError (with line and field path)
/// on malformed input and ValidationError when the configs are inconsistent.
Scenario parse_scenario_text(const std::string& text);
Scenario parse_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& scenario);

// ---------------------------------------------------------------------------
// presets

std::vector<std::string> preset_names();
/// Throws UnknownPreset.
Scenario preset(const std::string& name);

/// Two-system sharing network at the given transmitter/receiver gap.
Scenario sharing_scenario(double gap_m);
/// Three-node selective-reception network.
Scenario selectivity_scenario();
/// Sharing network with a seeded random gap, initial voltages and load steps.
Scenario randomized_sharing(std::uint64_t seed);

/// Gaps of the sweep and their reference-table case labels.
struct SweepCase {
    std::string label;
    double gap = 0.0;  // m
};
const std::vector<SweepCase>& sweep_cases();

/// Reference row measured on hardware for local system 2.
struct ReferenceRow {
    std::string label;
    double gap_mm = 0.0;
    double rx_in = 0.0;
    double rx_out = 0.0;
    double m2_out = 0.0;
    double total = 0.0;
};
const std::vector<ReferenceRow>& reference_table();

// ---------------------------------------------------------------------------
// reports

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelectivityCount {
    std::map<std::string, long> accepted;  // by decoded address bits
    std::map<std::string, long> rejected;
    long observed = 0;
};

struct ReferenceDelta {
    std::string quantity;
    double model = 0.0;
    double reference = 0.0;
    double delta = 0.0;  // model - reference
};

struct SummaryReport {
    std::string scenario;
    double duration = 0.0;
    bool insufficient_window = false;
    PowerSummary power;
    double rx_m2_total = 0.0;  // rx + m2 output, when both exist
    std::map<std::string, long> threshold_violations;
    long frames_below_floor = 0;
    long switch_overlap_steps = 0;
    std::map<std::string, SelectivityCount> selectivity;  // per receiver
    std::optional<std::string> reference_case;
    std::vector<ReferenceDelta> reference_deltas;
    std::vector<Check> checks;

    bool passed() const;
};

/// Window used for power averages: the last 250 ms, or the whole trace when shorter.
inline constexpr double kPowerWindow = 0.25;
inline constexpr double kMinimumAccountingWindow = 0.25;
/// Dip below a threshold tolerated by the maintenance check (V).
inline constexpr double kThresholdTolerance = 0.1;

SummaryReport make_report(const Scenario& scenario, const Trace& trace);
std::string report_json(const SummaryReport& report);
std::string report_text(const SummaryReport& report);

// ---------------------------------------------------------------------------
// export

enum class TraceFormat { DelimitedTable, StructuredRecord };

/// Writes the trace. Throws IoError when the file cannot be written.
void export_trace(const Trace& trace, TraceFormat format, const std::filesystem::path& path);
std::string trace_csv(const Trace& trace);
std::string trace_json(const Trace& trace);
/// Reads a delimited-table trace back (series and time only).
Trace read_trace_csv(const std::filesystem::path& path);
/// Reads a structured-record trace back, events included.
Trace read_trace_json(const std::filesystem::path& path);
/// Picks the reader from the extension (.csv, anything else structured).
Trace read_trace(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// runs

struct Overrides {
    std::optional<double> dt;
    std::optional<double> duration;
    std::optional<std::uint64_t> seed;
    bool full_rate = false;
};

void apply_overrides(Scenario& scenario, const Overrides& overrides);

struct RunResult {
    Scenario scenario;
    Trace trace;
    SummaryReport report;
};

RunResult run_scenario(const Scenario& scenario);

/// Runs scenarios concurrently (one thread each), preserving order.
std::vector<RunResult> run_parallel(const std::vector<Scenario>& scenarios);

/// Checks over a set of gap-sweep runs ordered by increasing gap.
std::vector<Check> sweep_checks(const std::vector<RunResult>& runs);

/// Writes <dir>/<stem>.csv, <stem>.trace.json and <stem>.summary.json.
/// Throws IoError.
void write_run(const RunResult& run, const std::filesystem::path& dir, const std::string& stem);

/// Runs a preset, writing <out>/<name>[_case].csv, .json traces and
/// summary files. Returns 0 when every embedded check passes, 1 otherwise.
/// Throws UnknownPreset.
int run_preset(const std::string& name, const Overrides& overrides, const std::filesystem::path& out_dir);

/// Scales the link's reference drive so that the rx input averaged over the
/// run equals target_power. Returns the calibrated reference drive.
double calibrate_reference_drive(Scenario scenario, double target_power, int iterations = 30);

}  // namespace ppd
