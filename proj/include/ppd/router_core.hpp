#pragma once

// Router input/output sections: wired packet output and tag reading, the ASK
// wireless transmitter, and the wireless receiver that switches between the
// header demodulator and the payload rectifier.

#include "ppd/analog_models.hpp"
#include "ppd/packet_codec.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace ppd {

enum class RxMode {
    HeaderListen,    // demodulator attached, rectifier open
    PayloadReceive,  // rectifier attached, demodulator open
    Detached,        // coil open
    Idle,            // receiver disabled while the router outputs
};

std::string_view to_string(RxMode mode);

struct RxSwitches {
    bool demodulator = false;  // S_d
    bool rectifier = false;    // S_R
};

constexpr RxSwitches switches_for(RxMode mode) noexcept
{
    switch (mode) {
    case RxMode::HeaderListen: return {true, false};
    case RxMode::PayloadReceive: return {false, true};
    case RxMode::Detached:
    case RxMode::Idle: return {false, false};
    }
    return {};
}

/// Wireless receiver state. bit_counter counts bit slots of the frame being
/// read (0 while waiting for a preamble).
struct WirelessReceiverState {
    Address own_address;
    RxMode mode = RxMode::HeaderListen;
    std::size_t bit_counter = 0;
    std::array<bool, kHeaderBits> header{};
    bool previous_sample = false;
};

struct HeaderDecision {
    Address decoded;
    bool accepted = false;
};

struct RxStep {
    RxMode next_mode = RxMode::HeaderListen;  // mode for the following bit slot
    std::optional<HeaderDecision> decision;   // set on the slot that completes the header
    bool sync_error = false;                  // preamble broken, receiver re-synchronising
};

/// Advances the receiver by one bit slot given that slot's demodulated level.
///
/// In HeaderListen the first rising level after a low slot marks preamble
/// bit 2; bit 3 must be low, otherwise the header is discarded (sync_error)
/// and the receiver keeps listening. After bit 7 the address decides between
/// PayloadReceive and Detached; both last until the 100-bit count completes,
/// after which the receiver listens again.
RxStep wireless_rx_step(WirelessReceiverState& state, bool demodulated_bit);

/// Same, demodulating an envelope sample first.
RxStep wireless_rx_step(WirelessReceiverState& state,
                        double envelope_sample,
                        double steady_amplitude,
                        const DemodulatorConfig& demod);

/// Inverter drive under ASK gating of the packetised storage voltage.
constexpr double wireless_tx_drive(bool bit_high, double storage_voltage) noexcept
{
    return bit_high ? storage_voltage : 0.0;
}

/// Power drawn from the transmitter storage: what the attached receivers take
/// plus the inverter's conversion loss at the current coil envelope. The loss
/// is the share that would accompany a transfer at the calibration gap, so a
/// single receiver there sees delivered / drawn == efficiency.
double transmitter_draw(double delivered_power,
                        double transmitter_envelope,
                        const WirelessLinkModel& model,
                        double efficiency);

/// Wired output section during one bit slot. Header slots carry the tag as a
/// voltage without current; payload slots pass current through the series
/// switch (and diode) when the destination has closed its input switch.
double wired_output_step(std::size_t bit_index,  // 0-based slot within the frame
                         bool output_enabled,
                         double source_v,
                         double dest_v,
                         const WiredLink& link,
                         bool dest_accepting);

/// Wired input section: accepts iff the tag's address is ours.
/// Throws SyncError on a broken preamble.
bool wired_input_step(Address own_address, std::span<const bool> header_bits);

/// Input-section bookkeeping for one wired line.
struct WiredInputLine {
    bool frame_active = false;
    bool header_done = false;
    bool accepted = false;
    long start_tick = 0;

    bool switch_closed() const noexcept { return frame_active && accepted; }
};

}  // namespace ppd
