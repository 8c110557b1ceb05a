#include "ppd/control_plane.hpp"

#include <stdexcept>

namespace ppd {

void ControlConfig::validate() const
{
    for (const auto& [id, v] : thresholds) {
        if (!(v > 0.0)) throw std::invalid_argument("threshold of '" + id + "' must be positive");
    }
    for (const auto& [id, v] : supply_voltages) {
        if (!(v > 0.0)) throw std::invalid_argument("supply voltage of '" + id + "' must be positive");
    }
    for (const auto& [id, v] : output_floor) {
        if (!(v >= 0.0)) throw std::invalid_argument("output floor of '" + id + "' must be non-negative");
    }
    if (!(gamma_timeout >= 0.0)) throw std::invalid_argument("gamma_timeout must be non-negative");
    if (!(hysteresis >= 0.0)) throw std::invalid_argument("hysteresis must be non-negative");
    for (const auto& [requester, list] : suppliers) {
        const auto r = thresholds.find(requester);
        if (r == thresholds.end()) continue;
        for (const auto& s : list) {
            const auto t = thresholds.find(s);
            if (t != thresholds.end() && !(t->second > r->second)) {
                throw std::invalid_argument("threshold of supplier '" + s + "' must exceed that of '" + requester +
                                            "' to keep a voltage gradient");
            }
        }
    }
    for (const auto& [id, sched] : schedules) {
        if (sched.destinations.empty() || sched.frames < 0 || sched.start < 0.0) {
            throw std::invalid_argument("schedule of '" + id + "' needs destinations and non-negative frames/start");
        }
    }
}

double ControlConfig::threshold(const std::string& id) const
{
    const auto it = thresholds.find(id);
    if (it == thresholds.end()) throw std::out_of_range("no threshold for '" + id + "'");
    return it->second;
}

std::optional<double> ControlConfig::floor(const std::string& id) const
{
    const auto it = output_floor.find(id);
    if (it == output_floor.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> select_priority_destination(std::span<const bool> demands_by_priority)
{
    for (std::size_t i = 0; i < demands_by_priority.size(); ++i) {
        if (demands_by_priority[i]) return i;
    }
    return std::nullopt;
}

FallbackDemand update_fallback_demand(FallbackDemandState& state,
                                      double storage_v,
                                      double threshold,
                                      double band,
                                      double now,
                                      double timeout)
{
    const bool was = state.supervisor.wanting();
    const bool want = state.supervisor.update(storage_v, threshold, band);
    if (want && !was) state.since = now;
    FallbackDemand d;
    d.to_primary = want;
    // Tick times are multiples of the bit width; tolerate their rounding.
    d.to_fallback = want && (now - state.since) >= timeout - 1e-12;
    return d;
}

IoResolution enforce_no_simultaneous_io(bool input_in_flight,
                                        bool output_in_flight,
                                        IoRequest input,
                                        IoRequest output) noexcept
{
    if (input_in_flight || output_in_flight) return {};
    if (input.pending && output.pending) {
        if (output.since < input.since) return {false, true};
        return {true, false};
    }
    return {input.pending, output.pending};
}

}  // namespace ppd
