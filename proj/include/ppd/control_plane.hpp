#pragma once

// Distributed demand-signal control. Routers exchange only binary demand
// lines with their neighbours; each controller here is a small pure function
// or a value-type state machine advanced once per control tick.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppd {

/// Scripted sender: issues frames back to back, cycling through destinations.
struct FrameSchedule {
    std::vector<std::string> destinations;
    int frames = 0;
    double start = 0.0;  // s
};

struct ControlConfig {
    std::map<std::string, double> thresholds;       // supervised storage -> V
    std::map<std::string, double> supply_voltages;  // source router -> V
    std::map<std::string, double> output_floor;     // forwarding router -> V
    double gamma_timeout = 20e-3;                   // s
    double hysteresis = 0.1;                        // V above threshold to release a demand
    /// sender -> destinations, highest priority first
    std::map<std::string, std::vector<std::string>> priority;
    /// requester -> suppliers, primary first, fallbacks after gamma_timeout
    std::map<std::string, std::vector<std::string>> suppliers;
    std::map<std::string, FrameSchedule> schedules;

    /// Throws std::invalid_argument for non-positive thresholds, supplies or
    /// floors, negative timeout or hysteresis, or a supplier whose threshold
    /// does not exceed its requester's.
    void validate() const;
    double threshold(const std::string& id) const;
    std::optional<double> floor(const std::string& id) const;
};

struct DemandLine {
    std::string from;
    std::string to;
    bool asserted = false;
};

/// Threshold supervision with release hysteresis: asserts below threshold,
/// releases at threshold + band.
class DemandSupervisor {
public:
    bool update(double voltage, double threshold, double band) noexcept
    {
        if (voltage < threshold) {
            wanting_ = true;
        } else if (voltage >= threshold + band) {
            wanting_ = false;
        }
        return wanting_;
    }
    bool wanting() const noexcept { return wanting_; }

private:
    bool wanting_ = false;
};

/// Picks the first asserted demand in priority order (index into the span).
std::optional<std::size_t> select_priority_destination(std::span<const bool> demands_by_priority);

/// Forwarding router output gate: demand from downstream and storage at or
/// above the output floor.
constexpr bool forwarder_may_issue(bool downstream_demand, double storage_v, double output_floor) noexcept
{
    return downstream_demand && storage_v >= output_floor;
}

/// Load-side supervision with fallback supplier.
///
/// The demand goes to the primary supplier as soon as the storage falls below
/// threshold. If it is still unsatisfied after the timeout, the fallback
/// supplier is asked as well; the primary line stays asserted so the primary
/// can resume. Both clear once the storage recovers to threshold + band.
struct FallbackDemandState {
    DemandSupervisor supervisor;
    double since = 0.0;
};

struct FallbackDemand {
    bool to_primary = false;
    bool to_fallback = false;
};

FallbackDemand update_fallback_demand(FallbackDemandState& state,
                                      double storage_v,
                                      double threshold,
                                      double band,
                                      double now,
                                      double timeout);

struct IoRequest {
    bool pending = false;
    long since = 0;  // control tick at which the request first appeared
};

struct IoResolution {
    bool start_input = false;
    bool start_output = false;
};

/// Input/output interlock for a forwarding router. An in-flight frame in
/// either direction blocks the other; between two pending requests the older
/// one is served, and a tie goes to the input.
IoResolution enforce_no_simultaneous_io(bool input_in_flight,
                                        bool output_in_flight,
                                        IoRequest input,
                                        IoRequest output) noexcept;

}  // namespace ppd
