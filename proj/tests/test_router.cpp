#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ppd/errors.hpp"
#include "ppd/router_core.hpp"

#include <vector>

using namespace ppd;

namespace {

struct FrameRun {
    std::vector<RxMode> modes;  // mode after each slot
    std::optional<HeaderDecision> decision;
    int sync_errors = 0;
};

// Feeds one frame (after a quiet slot) and records the mode after every slot.
FrameRun feed_frame(WirelessReceiverState& rx, Address dest)
{
    FrameRun out;
    wireless_rx_step(rx, false);
    for (bool bit : encode_frame(dest).bits) {
        const RxStep s = wireless_rx_step(rx, bit);
        if (s.decision) out.decision = s.decision;
        out.sync_errors += s.sync_error;
        out.modes.push_back(s.next_mode);
    }
    return out;
}

}  // namespace

TEST_CASE("mode switches never close both receiver paths")
{
    for (RxMode m : {RxMode::HeaderListen, RxMode::PayloadReceive, RxMode::Detached, RxMode::Idle}) {
        const RxSwitches s = switches_for(m);
        CHECK_FALSE((s.demodulator && s.rectifier));
    }
    CHECK(switches_for(RxMode::HeaderListen).demodulator);
    CHECK(switches_for(RxMode::PayloadReceive).rectifier);
    CHECK_FALSE(switches_for(RxMode::Detached).demodulator);
    CHECK_FALSE(switches_for(RxMode::Detached).rectifier);
}

TEST_CASE("own address: payload for bits 8-100, then header listening")
{
    WirelessReceiverState rx;
    rx.own_address = Address::from_bits("0001");
    const FrameRun r = feed_frame(rx, rx.own_address);
    REQUIRE(r.decision);
    CHECK(r.decision->accepted);
    // modes[i] is the mode for slot i+2 (1-based); the header occupies slots 1-7.
    for (std::size_t i = 0; i + 1 < kHeaderBits; ++i) CHECK(r.modes[i] == RxMode::HeaderListen);
    for (std::size_t i = kHeaderBits - 1; i + 1 < kFrameBits; ++i) CHECK(r.modes[i] == RxMode::PayloadReceive);
    CHECK(r.modes.back() == RxMode::HeaderListen);
    CHECK(rx.bit_counter == 0);
}

TEST_CASE("foreign address: detached for the rest of the frame")
{
    WirelessReceiverState rx;
    rx.own_address = Address::from_bits("0010");
    const FrameRun r = feed_frame(rx, Address::from_bits("0001"));
    REQUIRE(r.decision);
    CHECK_FALSE(r.decision->accepted);
    CHECK(r.decision->decoded == Address::from_bits("0001"));
    for (std::size_t i = kHeaderBits - 1; i + 1 < kFrameBits; ++i) CHECK(r.modes[i] == RxMode::Detached);
    CHECK(r.modes.back() == RxMode::HeaderListen);
}

TEST_CASE("selectivity over all address pairs")
{
    for (unsigned own = 0; own < 16; ++own) {
        for (unsigned dest = 0; dest < 16; ++dest) {
            WirelessReceiverState rx;
            rx.own_address = Address(own);
            const FrameRun r = feed_frame(rx, Address(dest));
            REQUIRE(r.decision);
            CHECK(r.decision->accepted == (own == dest));
            CHECK(r.sync_errors == 0);
        }
    }
}

TEST_CASE("back-to-back frames: header every frame, payload every second")
{
    WirelessReceiverState rx;
    rx.own_address = Address::from_bits("0001");
    int accepted = 0, listening_starts = 0;
    for (int f = 0; f < 10; ++f) {
        const Address dest = Address::from_bits(f % 2 == 0 ? "0001" : "0010");
        for (bool bit : encode_frame(dest).bits) {
            const RxMode before = rx.mode;
            const RxStep s = wireless_rx_step(rx, bit);
            if (s.decision && s.decision->accepted) ++accepted;
            if (before != RxMode::HeaderListen && s.next_mode == RxMode::HeaderListen) ++listening_starts;
        }
    }
    CHECK(accepted == 5);
    CHECK(listening_starts == 10);
}

TEST_CASE("quiet channel keeps listening")
{
    WirelessReceiverState rx;
    rx.own_address = Address(1);
    for (int i = 0; i < 500; ++i) {
        const RxStep s = wireless_rx_step(rx, 0.0, 1.0, DemodulatorConfig{});
        CHECK(s.next_mode == RxMode::HeaderListen);
        CHECK_FALSE(s.decision);
    }
}

TEST_CASE("broken preamble resynchronises")
{
    WirelessReceiverState rx;
    rx.own_address = Address(1);
    wireless_rx_step(rx, false);
    wireless_rx_step(rx, true);
    const RxStep s = wireless_rx_step(rx, true);
    CHECK(s.sync_error);
    CHECK(s.next_mode == RxMode::HeaderListen);
    CHECK(rx.bit_counter == 0);
    // A clean frame afterwards is still received.
    const FrameRun r = feed_frame(rx, Address(1));
    REQUIRE(r.decision);
    CHECK(r.decision->accepted);
}

TEST_CASE("idle receiver ignores the channel")
{
    WirelessReceiverState rx;
    rx.mode = RxMode::Idle;
    for (bool bit : encode_frame(Address(0)).bits) CHECK(wireless_rx_step(rx, bit).next_mode == RxMode::Idle);
}

TEST_CASE("transmitter gating")
{
    CHECK(wireless_tx_drive(true, 9.0) == 9.0);
    CHECK(wireless_tx_drive(false, 9.0) == 0.0);
}

TEST_CASE("wired output section")
{
    const WiredLink link{10.0, 0.6, true};
    CHECK(wired_output_step(50, true, 15.0, 9.9, link, true) == doctest::Approx(0.45));
    for (std::size_t b = 0; b < kHeaderBits; ++b) CHECK(wired_output_step(b, true, 15.0, 9.9, link, true) == 0.0);
    CHECK(wired_output_step(50, true, 9.0, 10.0, link, true) == 0.0);
    CHECK(wired_output_step(50, true, 15.0, 9.9, link, false) == 0.0);
    CHECK(wired_output_step(50, false, 15.0, 9.9, link, true) == 0.0);
}

TEST_CASE("wired input section")
{
    const auto own = Address::from_bits("0001");
    const auto h1 = encode_frame(own).bits;
    const auto h2 = encode_frame(Address::from_bits("0010")).bits;
    CHECK(wired_input_step(own, std::span<const bool>(h1.data(), kHeaderBits)));
    CHECK_FALSE(wired_input_step(own, std::span<const bool>(h2.data(), kHeaderBits)));
    const std::array<bool, 7> broken{true, true, false, false, false, false, true};
    CHECK_THROWS_AS(wired_input_step(own, broken), SyncError);

    WiredInputLine line;
    line.frame_active = true;
    line.accepted = false;
    CHECK_FALSE(line.switch_closed());
    line.accepted = true;
    CHECK(line.switch_closed());
}
