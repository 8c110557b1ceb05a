#pragma once

// Fixed-step simulation of a power packet network. Each step runs, in order:
// controllers (on control-tick boundaries), router state machines, analog
// integration, trace sampling.

#include "ppd/analog_models.hpp"
#include "ppd/control_plane.hpp"
#include "ppd/packet_codec.hpp"
#include "ppd/router_core.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ppd {

enum class Section { None, Wired, Wireless };

struct RouterSpec {
    std::string id;
    Address address;
    bool source = false;        // ideal supply (voltage from ControlConfig::supply_voltages)
    double capacitance = 1e-3;  // F, storage routers only
    double initial_voltage = 0.0;
    std::optional<double> load_resistance;  // ohm
    Section input = Section::None;
    Section output = Section::None;
};

struct WiredEdge {
    std::string from;
    std::string to;
    WiredLink link;
};

struct WirelessEdge {
    std::string from;  // transmitter
    std::string to;    // receiver
    double axial_gap = 0.05;
    double lateral_offset = 0.0;
};

/// Parameters shared by every wireless edge.
struct WirelessParams {
    WirelessLinkModel model;  // geometry fields are taken from each edge
    double efficiency = 0.8;  // delivered / drawn at the calibration gap
    DemodulatorConfig demod;
};

/// Step change of a load resistance at a given time.
struct LoadStep {
    double time = 0.0;
    std::string router;
    double resistance = 47.0;
};

struct Topology {
    std::vector<RouterSpec> routers;
    std::vector<WiredEdge> wired;
    std::vector<WirelessEdge> wireless;
    WirelessParams wireless_params;
    std::vector<LoadStep> load_schedule;

    /// Throws ValidationError on dangling ids, duplicate ids or addresses,
    /// non-positive capacitance/resistance, or a wireless edge that does not
    /// join a wireless output to a wireless input.
    void validate(const ControlConfig& control) const;
    const RouterSpec& router(const std::string& id) const;
    WirelessLinkModel link_model(const WirelessEdge& edge) const;
};

struct SimConfig {
    double dt = 1e-6;
    double duration = 0.25;
    std::uint64_t seed = 0;
    double bit_width = kDefaultBitWidth;
    double sample_interval = 10e-6;
    bool full_rate = false;

    /// Throws ConfigError unless 0 < dt <= 10 us, the bit width and sample
    /// interval are whole multiples of dt, and duration >= 0.
    void validate() const;
    long steps_per_bit() const;
    long steps_per_sample() const;
};

enum class PacketEventKind { Sent, Accepted, Rejected };

std::string_view to_string(PacketEventKind kind);

struct PacketEvent {
    double time = 0.0;
    std::string source;
    std::string router;  // sender for Sent, deciding receiver otherwise
    Address destination;
    PacketEventKind kind = PacketEventKind::Sent;
    double voltage = 0.0;  // sender storage voltage at issue (Sent only)
};

struct DemandEvent {
    double time = 0.0;
    std::string from;
    std::string to;
    bool asserted = false;
};

/// Sampled record of a run. series[i] holds column columns[i]; power columns
/// (*.P_in, *.P_out, *.P_load) are averages over the interval ending at the
/// sample, every other column is the instantaneous value.
struct Trace {
    double sample_interval = 0.0;
    std::vector<double> time;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> series;
    std::vector<PacketEvent> events;
    std::vector<DemandEvent> demand_events;
    /// Full-rate interlock check: steps where a router had an input and an
    /// output switch closed at once.
    long switch_overlap_steps = 0;
    double duration = 0.0;

    std::size_t size() const noexcept { return time.size(); }
    bool has_column(const std::string& name) const;
    const std::vector<double>& column(const std::string& name) const;
};

class World;

/// Advances the world by one step. dt must equal the world's configured step.
void step(World& world, double dt);

/// Runs a full simulation and returns its trace.
Trace run(const Topology& topology, const ControlConfig& control, const SimConfig& sim);

struct RouterPower {
    double input = 0.0;   // W into the router's storage (or load) from its input section
    double output = 0.0;  // W leaving the router's storage or source through its output section
    double load = 0.0;    // W dissipated in the local load
};

struct PowerSummary {
    double window = 0.0;
    std::map<std::string, RouterPower> routers;
};

/// Time-averaged power per router over the last `window` seconds of the trace.
/// Throws std::invalid_argument if the window exceeds the trace duration.
PowerSummary summarize_power(const Trace& trace, double window);

/// Mutable simulation state. Created from validated configs; advanced by
/// step(). Exposed so tests and tools can inspect intermediate state.
class World {
public:
    World(const Topology& topology, const ControlConfig& control, const SimConfig& sim);
    ~World();
    World(World&&) noexcept;
    World& operator=(World&&) noexcept;

    double time() const noexcept;
    long step_count() const noexcept;
    double voltage(const std::string& router) const;
    RxMode rx_mode(const std::string& router) const;
    bool input_switch(const std::string& router) const;
    bool output_switch(const std::string& router) const;
    const Trace& trace() const noexcept;
    Trace take_trace();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    friend void step(World& world, double dt);
};

}  // namespace ppd
