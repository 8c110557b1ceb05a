#include "ppd/router_core.hpp"

#include "ppd/errors.hpp"

namespace ppd {

std::string_view to_string(RxMode mode)
{
    switch (mode) {
    case RxMode::HeaderListen: return "HeaderListen";
    case RxMode::PayloadReceive: return "PayloadReceive";
    case RxMode::Detached: return "Detached";
    case RxMode::Idle: return "Idle";
    }
    return "?";
}

RxStep wireless_rx_step(WirelessReceiverState& state, bool bit)
{
    RxStep out;
    switch (state.mode) {
    case RxMode::Idle:
        out.next_mode = RxMode::Idle;
        break;

    case RxMode::HeaderListen:
        if (state.bit_counter == 0) {
            if (bit && !state.previous_sample) {
                state.header.fill(false);
                state.header[1] = true;
                state.bit_counter = 2;
            }
            out.next_mode = RxMode::HeaderListen;
            break;
        }
        state.header[state.bit_counter] = bit;
        ++state.bit_counter;
        if (state.bit_counter == kSyncBits && bit) {
            // 0,1,1: not a preamble.
            out.sync_error = true;
            state.bit_counter = 0;
            out.next_mode = RxMode::HeaderListen;
            break;
        }
        if (state.bit_counter == kHeaderBits) {
            try {
                const Address a = decode_header(state.header);
                const bool ok = a == state.own_address;
                out.decision = HeaderDecision{a, ok};
                out.next_mode = ok ? RxMode::PayloadReceive : RxMode::Detached;
            } catch (const SyncError&) {
                out.sync_error = true;
                state.bit_counter = 0;
                out.next_mode = RxMode::HeaderListen;
            }
            break;
        }
        out.next_mode = RxMode::HeaderListen;
        break;

    case RxMode::PayloadReceive:
    case RxMode::Detached:
        ++state.bit_counter;
        if (end_of_packet(state.bit_counter)) {
            state.bit_counter = 0;
            out.next_mode = RxMode::HeaderListen;
        } else {
            out.next_mode = state.mode;
        }
        break;
    }
    state.previous_sample = bit;
    state.mode = out.next_mode;
    return out;
}

RxStep wireless_rx_step(WirelessReceiverState& state,
                        double envelope_sample,
                        double steady_amplitude,
                        const DemodulatorConfig& demod)
{
    return wireless_rx_step(state, demodulate_bit(envelope_sample, steady_amplitude, demod));
}

double transmitter_draw(double delivered_power,
                        double transmitter_envelope,
                        const WirelessLinkModel& model,
                        double efficiency)
{
    const double rel = transmitter_envelope / model.reference_drive;
    const double reference_power = model.calibration_points.front().power * rel * rel;
    return delivered_power + (1.0 / efficiency - 1.0) * reference_power;
}

double wired_output_step(std::size_t bit_index,
                         bool output_enabled,
                         double source_v,
                         double dest_v,
                         const WiredLink& link,
                         bool dest_accepting)
{
    if (bit_index < kHeaderBits || !output_enabled || !dest_accepting) return 0.0;
    return wired_transfer_current(source_v, dest_v, link);
}

bool wired_input_step(Address own_address, std::span<const bool> header_bits)
{
    return decode_header(header_bits) == own_address;
}

}  // namespace ppd
