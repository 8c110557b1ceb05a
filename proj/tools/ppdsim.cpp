// Command-line front end: run scenario files, bundled presets, gap/threshold
// sweeps, and recompute reports from saved traces.
//
// Exit codes: 0 all checks passed, 1 an acceptance check failed, 2 bad
// configuration or I/O.

#include "ppd/errors.hpp"
#include "ppd/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ppd;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

struct OverrideFlags {
    std::optional<double> dt;
    std::optional<double> duration;
    std::optional<std::uint64_t> seed;
    bool full_rate = false;

    Overrides get() const { return {dt, duration, seed, full_rate}; }
};

void add_override_flags(CLI::App* cmd, OverrideFlags& f)
{
    cmd->add_option("--dt", f.dt, "integration step [s]")->check(CLI::PositiveNumber);
    cmd->add_option("--duration", f.duration, "simulated time [s]")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_flag("--full-rate", f.full_rate, "record every integration step instead of decimating");
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!(f << text)) throw IoError("cannot write '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
}

Scenario load_base(const std::string& scenario_path, const std::string& preset_name)
{
    if (!scenario_path.empty()) return parse_scenario(scenario_path);
    return preset(preset_name);
}

// Writes the artifacts a scenario file asks for; falls back to <out>/<name>.*
void write_outputs(const RunResult& r, const fs::path& out_dir, bool out_given)
{
    const auto& o = r.scenario.outputs;
    const bool named = !o.trace_csv.empty() || !o.trace_json.empty() || !o.summary.empty();
    if (named && !out_given) {
        if (!o.trace_csv.empty()) export_trace(r.trace, TraceFormat::DelimitedTable, o.trace_csv);
        if (!o.trace_json.empty()) export_trace(r.trace, TraceFormat::StructuredRecord, o.trace_json);
        if (!o.summary.empty()) write_file(o.summary, report_json(r.report));
        return;
    }
    ensure_dir(out_dir);
    write_run(r, out_dir, r.scenario.name.empty() ? "run" : r.scenario.name);
}

int cmd_run(const std::string& path, const OverrideFlags& flags, const fs::path& out, bool out_given)
{
    Scenario s = parse_scenario(path);
    apply_overrides(s, flags.get());
    const RunResult r = run_scenario(s);
    write_outputs(r, out, out_given);
    std::cout << report_text(r.report);
    return r.report.passed() ? kExitPass : kExitFail;
}

int cmd_preset(const std::string& name, const OverrideFlags& flags, const fs::path& out)
{
    const int rc = run_preset(name, flags.get(), out);
    std::cout << "preset " << name << ": " << (rc == 0 ? "pass" : "FAIL") << " (artifacts in " << out.string() << ")\n";
    return rc;
}

struct SweepArgs {
    std::string scenario;
    std::string preset = "sharing_case_i";
    std::vector<double> gaps_mm;
    std::string router;
    std::vector<double> thresholds;
};

int cmd_sweep(const SweepArgs& a, const OverrideFlags& flags, const fs::path& out)
{
    const Scenario base = load_base(a.scenario, a.preset);
    if (base.topology.wireless.empty() && !a.gaps_mm.empty()) {
        throw ValidationError("sweep over gaps needs a scenario with a wireless link");
    }
    if (!a.thresholds.empty() && a.router.empty()) throw ValidationError("--threshold values need --router");

    const std::vector<double> gaps = a.gaps_mm.empty() ? std::vector<double>{-1.0} : a.gaps_mm;
    const std::vector<double> thrs = a.thresholds.empty() ? std::vector<double>{-1.0} : a.thresholds;
    std::vector<Scenario> grid;
    for (double g : gaps) {
        for (double v : thrs) {
            Scenario s = base;
            std::string name = base.name;
            if (g >= 0.0) {
                for (auto& w : s.topology.wireless) w.axial_gap = g * 1e-3;
                name += "_gap" + std::to_string(static_cast<long>(g)) + "mm";
            }
            if (v >= 0.0) {
                s.control.thresholds[a.router] = v;
                if (s.control.output_floor.count(a.router)) s.control.output_floor[a.router] = v;
                char buf[32];
                std::snprintf(buf, sizeof buf, "_%s%.2fV", a.router.c_str(), v);
                name += buf;
            }
            s.name = name;
            apply_overrides(s, flags.get());
            s.topology.validate(s.control);
            grid.push_back(std::move(s));
        }
    }

    const auto runs = run_parallel(grid);
    ensure_dir(out);
    bool ok = true;
    std::printf("%-40s %10s %10s %10s %s\n", "case", "rx in W", "m2 out W", "rx+m2 W", "checks");
    for (const auto& r : runs) {
        write_run(r, out, r.scenario.name);
        auto pw = [&](const char* id, bool input) {
            const auto it = r.report.power.routers.find(id);
            if (it == r.report.power.routers.end()) return 0.0;
            return input ? it->second.input : it->second.output;
        };
        std::printf("%-40s %10.3f %10.3f %10.3f %s\n", r.scenario.name.c_str(), pw("rx", true), pw("m2", false),
                    r.report.rx_m2_total, r.report.passed() ? "pass" : "FAIL");
        ok = ok && r.report.passed();
    }
    return ok ? kExitPass : kExitFail;
}

int cmd_report(const std::string& trace_path, const std::string& scenario, const std::string& preset_name,
               const std::string& summary_out)
{
    const Scenario s = load_base(scenario, preset_name);
    const Trace t = read_trace(trace_path);
    const SummaryReport rep = make_report(s, t);
    std::cout << report_text(rep);
    if (!summary_out.empty()) write_file(summary_out, report_json(rep));
    return rep.passed() ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"ppdsim: power packet dispatching simulator"};
    app.require_subcommand(1);

    std::string out = "out";
    OverrideFlags flags;

    auto* run = app.add_subcommand("run", "simulate a scenario file");
    std::string scenario_path;
    run->add_option("scenario", scenario_path, "scenario document")->required()->check(CLI::ExistingFile);
    auto* run_out = run->add_option("--out", out, "output directory (overrides paths in the file)");
    add_override_flags(run, flags);

    auto* pre = app.add_subcommand("preset", "run a bundled experiment");
    std::string preset_name;
    bool list = false;
    pre->add_option("name", preset_name, "preset name");
    pre->add_flag("--list", list, "print preset names");
    std::string save_path;
    pre->add_option("--save", save_path, "write the preset as a scenario file instead of running it");
    pre->add_option("--out", out, "output directory");
    add_override_flags(pre, flags);

    auto* sweep = app.add_subcommand("sweep", "parameter grid over gap and one router threshold");
    SweepArgs sa;
    sweep->add_option("--scenario", sa.scenario, "base scenario file")->check(CLI::ExistingFile);
    sweep->add_option("--preset", sa.preset, "base preset (when no file is given)");
    sweep->add_option("--gap-mm", sa.gaps_mm, "axial gaps [mm]")->delimiter(',');
    sweep->add_option("--router", sa.router, "router whose threshold is swept");
    sweep->add_option("--threshold", sa.thresholds, "threshold values [V]")->delimiter(',');
    sweep->add_option("--out", out, "output directory");
    add_override_flags(sweep, flags);

    auto* rep = app.add_subcommand("report", "recompute a summary from a saved trace");
    std::string trace_path, rep_scenario, rep_preset, summary_out;
    rep->add_option("trace", trace_path, "trace (.csv or .trace.json)")->required()->check(CLI::ExistingFile);
    auto* rs = rep->add_option("--scenario", rep_scenario, "scenario the trace came from")->check(CLI::ExistingFile);
    auto* rp = rep->add_option("--preset", rep_preset, "preset the trace came from");
    rs->excludes(rp);
    rep->add_option("--summary", summary_out, "write the JSON summary here");

    auto* cal = app.add_subcommand("calibrate", "fit the link reference drive to a 50 mm rx input power");
    double target = 0.50;
    cal->add_option("--target-w", target, "rx input to hit at 50 mm [W]")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitPass : kExitConfig;
    }

    try {
        if (*run) return cmd_run(scenario_path, flags, out, run_out->count() > 0);
        if (*pre) {
            if (list) {
                for (const auto& n : preset_names()) std::cout << n << "\n";
                return kExitPass;
            }
            if (preset_name.empty()) throw ValidationError("preset name required (see --list)");
            if (!save_path.empty()) {
                Scenario s = preset(preset_name);
                apply_overrides(s, flags.get());
                write_file(save_path, serialize_scenario(s));
                return kExitPass;
            }
            return cmd_preset(preset_name, flags, out);
        }
        if (*sweep) return cmd_sweep(sa, flags, out);
        if (*rep) {
            if (rep_scenario.empty() && rep_preset.empty()) throw ValidationError("report needs --scenario or --preset");
            return cmd_report(trace_path, rep_scenario, rep_preset, summary_out);
        }
        if (*cal) {
            std::printf("%.4f\n", calibrate_reference_drive(sharing_scenario(0.05), target));
            return kExitPass;
        }
    } catch (const ParseError& e) {
        std::cerr << "parse error";
        if (e.line() > 0) std::cerr << " at line " << e.line();
        if (!e.field().empty()) std::cerr << " (" << e.field() << ")";
        std::cerr << ": " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "bad configuration: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UnknownPreset& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
