#include "ppd/analog_models.hpp"

#include <algorithm>
#include <stdexcept>

namespace ppd {

CapacitorState step_capacitor(CapacitorState state, double current_in, double current_out, double dt)
{
    state.voltage += (current_in - current_out) * dt / state.capacitance;
    if (state.voltage < 0.0) state.voltage = 0.0;
    return state;
}

CapacitorState exchange_energy(CapacitorState state, double power, double dt)
{
    const double v2 = state.voltage * state.voltage + 2.0 * power * dt / state.capacitance;
    state.voltage = v2 > 0.0 ? std::sqrt(v2) : 0.0;
    return state;
}

double wired_transfer_current(double source_v, double dest_v, const WiredLink& link)
{
    if (!link.unidirectional) return (source_v - dest_v) / link.series_resistance;
    return std::max(0.0, (source_v - dest_v - link.diode_drop) / link.series_resistance);
}

void WirelessLinkModel::validate() const
{
    if (!(axial_gap >= 0.0) || !(lateral_offset >= 0.0)) {
        throw std::invalid_argument("wireless link geometry must be non-negative");
    }
    if (!(envelope_time_constant > 0.0)) throw std::invalid_argument("envelope_time_constant must be positive");
    if (!(reference_drive > 0.0)) throw std::invalid_argument("reference_drive must be positive");
    if (!(cutoff_gap > 0.0)) throw std::invalid_argument("cutoff_gap must be positive");
    if (!(coil_radius > 0.0)) throw std::invalid_argument("coil_radius must be positive");
    if (calibration_points.empty() || calibration_points.size() > 2) {
        throw std::invalid_argument("wireless link needs one or two calibration points");
    }
    for (const auto& p : calibration_points) {
        if (!(p.gap >= 0.0) || !(p.power >= 0.0)) throw std::invalid_argument("calibration points must be non-negative");
    }
    if (calibration_points.size() == 2) {
        const auto& a = calibration_points[0];
        const auto& b = calibration_points[1];
        if (!(b.gap > a.gap) || !(b.power < a.power) || !(b.power > 0.0)) {
            throw std::invalid_argument("second calibration point must be farther and weaker, with positive power");
        }
        (void)coupling_radius();
    }
}

double WirelessLinkModel::coupling_radius() const
{
    if (calibration_points.size() < 2) return coil_radius;
    const auto& a = calibration_points[0];
    const auto& b = calibration_points[1];
    // ((r^2 + a^2) / (r^2 + b^2)) = q  with q = (Pb/Pa)^(1/3)
    const double q = std::cbrt(b.power / a.power);
    const double r2 = (q * b.gap * b.gap - a.gap * a.gap) / (1.0 - q);
    if (!(r2 > 0.0)) throw std::invalid_argument("calibration points imply a non-physical coupling radius");
    return std::sqrt(r2);
}

double WirelessLinkModel::nominal_coupling() const
{
    const double r = coupling_radius();
    const double d0 = calibration_points.front().gap;
    const double d = distance();
    const double ratio = (r * r + d0 * d0) / (r * r + d * d);
    return ratio * ratio * ratio;
}

double WirelessLinkModel::coupling() const
{
    if (axial_gap >= cutoff_gap) return 0.0;
    return nominal_coupling();
}

double received_power(const WirelessLinkModel& model, double tx_drive_voltage)
{
    const double rel = tx_drive_voltage / model.reference_drive;
    return model.calibration_points.front().power * model.coupling() * rel * rel;
}

double envelope_step(double current_envelope, double target_envelope, double dt, double tau)
{
    return current_envelope + (target_envelope - current_envelope) * -std::expm1(-dt / tau);
}

void DemodulatorConfig::validate(double modulation_frequency) const
{
    if (!(lowpass_cutoff > modulation_frequency)) {
        throw std::invalid_argument("demodulator cutoff must exceed the modulation frequency");
    }
    if (!(decision_threshold_fraction > 0.0 && decision_threshold_fraction < 1.0)) {
        throw std::invalid_argument("decision threshold fraction must be in (0, 1)");
    }
}

bool demodulate_bit(double envelope_sample, double steady_amplitude, const DemodulatorConfig& cfg)
{
    return envelope_sample >= cfg.decision_threshold_fraction * steady_amplitude;
}

bool CircuitConstants::all_positive() const
{
    for (double v : {carrier_frequency, L_f1, C_1, C_2, L_1, r_1, L_m, L_2, r_2, C_3, C_4, L_f2, C_f, C_d1, C_d2, R_d}) {
        if (!(v > 0.0)) return false;
    }
    return true;
}

}  // namespace ppd
