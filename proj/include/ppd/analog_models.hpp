#pragma once

// Lumped continuous-time models used by the simulator: capacitor charge
// balance, diode-protected wired transfer, and an envelope-level model of the
// magnetic-resonant wireless link (gap-dependent received power, first-order
// ASK envelope, threshold demodulation).

#include <cmath>
#include <vector>

namespace ppd {

struct CapacitorState {
    double capacitance = 1e-3;  // F
    double voltage = 0.0;       // V

    double energy() const noexcept { return 0.5 * capacitance * voltage * voltage; }
    double charge() const noexcept { return capacitance * voltage; }
};

/// Forward charge balance over dt, clamped at 0 V.
CapacitorState step_capacitor(CapacitorState state, double current_in, double current_out, double dt);

/// Adds (or, for negative power, removes) power * dt of energy. Used for the
/// rectifier output and the inverter draw, which are power-defined rather than
/// current-defined. Clamped at 0 V.
CapacitorState exchange_energy(CapacitorState state, double power, double dt);

struct WiredLink {
    double series_resistance = 2.2;  // ohm
    double diode_drop = 0.6;         // V
    bool unidirectional = true;
};

double wired_transfer_current(double source_v, double dest_v, const WiredLink& link);

struct CalibrationPoint {
    double gap = 0.0;    // m, coaxial
    double power = 0.0;  // W at the reference drive
};

/// Envelope-level wireless link between one transmitter coil and one receiver
/// coil.
///
/// Received power follows a coaxial-loop coupling falloff
///
///     eta(d) = ((r^2 + d0^2) / (r^2 + d^2))^3,   d = sqrt(gap^2 + offset^2)
///
/// normalised to 1 at the first calibration gap d0 and scaled by the square of
/// the drive voltage relative to reference_drive. With two calibration points
/// the loop radius r is solved from their power ratio; with one, the physical
/// coil radius is used. Beyond cutoff_gap (axial) no power is transferred.
struct WirelessLinkModel {
    double axial_gap = 0.05;       // m
    double lateral_offset = 0.0;   // m
    double envelope_time_constant = 25e-6 / std::log(10.0);  // s
    double reference_drive = 12.0;  // V at which calibration powers hold
    double cutoff_gap = 0.25;       // m
    double coil_radius = 0.05;      // m, used when only one calibration point
    std::vector<CalibrationPoint> calibration_points{{0.05, 0.50}, {0.10, 0.20}};

    /// Throws std::invalid_argument on non-physical parameters.
    void validate() const;
    /// Loop radius of the falloff law.
    double coupling_radius() const;
    /// Normalised power coupling eta at this geometry (0 beyond cutoff).
    double coupling() const;
    /// Coupling ignoring the cutoff; used as the demodulator's expected level.
    double nominal_coupling() const;
    /// Centre-to-centre coil distance.
    double distance() const { return std::hypot(axial_gap, lateral_offset); }
};

/// Steady-state power delivered into the receiving storage for a constant
/// transmitter drive voltage.
double received_power(const WirelessLinkModel& model, double tx_drive_voltage);

/// Exact first-order relaxation toward target over dt.
double envelope_step(double current_envelope, double target_envelope, double dt, double tau);

/// Rise time (10 -> 90 %) of the transmitter and the matching time constant.
inline constexpr double kTransmitterRiseTime = 25e-6;
inline double rise_time_constant() { return kTransmitterRiseTime / std::log(10.0); }

struct DemodulatorConfig {
    double lowpass_cutoff = 100e3;             // Hz
    double decision_threshold_fraction = 0.5;  // of the steady high level

    /// Throws std::invalid_argument unless the cutoff exceeds the modulation
    /// frequency and the threshold fraction is inside (0, 1).
    void validate(double modulation_frequency) const;
    double lowpass_time_constant() const { return 1.0 / (2.0 * 3.14159265358979323846 * lowpass_cutoff); }
};

bool demodulate_bit(double envelope_sample, double steady_amplitude, const DemodulatorConfig& cfg);

/// Design values of the 1 MHz class-E transmitter/receiver. Carried as
/// metadata next to the envelope model; the simulator does not integrate
/// these element equations.
struct CircuitConstants {
    double carrier_frequency = 1e6;  // f
    // primary side
    double L_f1 = 100e-6;  // listed in the design table with unit uF; stored as henries
    double C_1 = 3.3e-9;
    double C_2 = 1.44e-9;
    double L_1 = 19.3e-6;
    double r_1 = 0.88;
    double L_m = 1.75e-6;
    // secondary side, rectifier
    double L_2 = 19.2e-6;
    double r_2 = 0.88;
    double C_3 = 1.56e-9;
    double C_4 = 1.68e-9;
    double L_f2 = 100e-6;
    double C_f = 0.47e-6;
    // secondary side, demodulator
    double C_d1 = 1.0e-6;
    double C_d2 = 820e-12;
    double R_d = 12e3;

    bool all_positive() const;
    /// Coupling coefficient L_m / sqrt(L_1 L_2).
    double coupling_coefficient() const { return L_m / std::sqrt(L_1 * L_2); }
};

}  // namespace ppd
