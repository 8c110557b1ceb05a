#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ppd/errors.hpp"
#include "ppd/packet_codec.hpp"

#include <array>
#include <cmath>

using namespace ppd;

namespace {

std::span<const bool> header_of(const BitFrame& f)
{
    return std::span<const bool>(f.bits.data(), kHeaderBits);
}

// Level of a back-to-back stream of identical frames whose first bit starts at `offset`.
Sampler repeating_stream(Address a, double offset, double period = kDefaultBitWidth)
{
    const BitFrame f = encode_frame(a, period);
    return [f, offset, period](double t) {
        const double k = std::floor((t - offset) / period);
        long idx = static_cast<long>(k) % static_cast<long>(kFrameBits);
        if (idx < 0) idx += static_cast<long>(kFrameBits);
        return f.bits[static_cast<std::size_t>(idx)];
    };
}

// Reads one frame's header at the recovered phase: the 010 that follows a high slot.
Address decode_at_phase(const Sampler& s, double phase, double period = kDefaultBitWidth)
{
    std::array<bool, 2 * kFrameBits> bits{};
    for (std::size_t k = 0; k < bits.size(); ++k) bits[k] = s(phase + (static_cast<double>(k) + 0.5) * period);
    for (std::size_t i = 1; i + kHeaderBits < bits.size(); ++i) {
        if (bits[i - 1] && !bits[i] && bits[i + 1] && !bits[i + 2]) {
            return decode_header(std::span<const bool>(bits).subspan(i, kHeaderBits));
        }
    }
    throw SyncError("no frame start in test capture");
}

double circular_distance(double a, double b, double period)
{
    const double d = std::fmod(std::abs(a - b), period);
    return std::min(d, period - d);
}

}  // namespace

TEST_CASE("encode_frame lays out preamble, MSB-first address and payload")
{
    const std::array<bool, 7> h0001{false, true, false, false, false, false, true};
    const std::array<bool, 7> h0000{false, true, false, false, false, false, false};
    const std::array<bool, 7> h1111{false, true, false, true, true, true, true};
    const std::pair<unsigned, std::array<bool, 7>> cases[] = {{0b0001, h0001}, {0b0000, h0000}, {0b1111, h1111}};
    for (const auto& [value, head] : cases) {
        const BitFrame f = encode_frame(Address(value));
        CHECK(f.bits.size() == 100);
        for (std::size_t i = 0; i < 7; ++i) CHECK(f.bits[i] == head[i]);
        for (std::size_t i = 7; i < kFrameBits; ++i) CHECK(f.bits[i]);
        CHECK(f.well_formed());
    }
}

TEST_CASE("frame duration is 100 bit widths")
{
    CHECK(encode_frame(Address(3)).duration() == doctest::Approx(10e-3));
}

TEST_CASE("decode_header examples")
{
    const std::array<bool, 8> sys2{false, true, false, false, false, true, false, true};
    const std::array<bool, 8> sys1{false, true, false, false, false, false, true, true};
    CHECK(decode_header(sys2) == Address::from_bits("0010"));
    CHECK(decode_header(sys1) == Address::from_bits("0001"));

    const std::array<bool, 7> broken{true, true, false, false, false, false, true};
    CHECK_THROWS_AS(decode_header(broken), SyncError);
    const std::array<bool, 4> short_capture{false, true, false, true};
    CHECK_THROWS_AS(decode_header(short_capture), std::invalid_argument);
}

TEST_CASE("round trip over every address")
{
    for (unsigned v = 0; v < 16; ++v) {
        const Address a(v);
        CHECK(decode_header(header_of(encode_frame(a))) == a);
        CHECK(Address::from_bits(a.to_bits()) == a);
    }
}

TEST_CASE("Address rejects values outside four bits")
{
    CHECK_THROWS_AS(Address(16), std::invalid_argument);
    CHECK_THROWS_AS(Address::from_bits("012"), std::invalid_argument);
    CHECK_THROWS_AS(Address::from_bits("00102"), std::invalid_argument);
}

TEST_CASE("synchronize: aligned stream recovers zero phase")
{
    const ClockConfig cfg;
    const double step = cfg.period * cfg.phase_step;
    const double phase = synchronize(repeating_stream(Address(1), 0.0), cfg);
    CHECK(circular_distance(phase, 0.0, cfg.period) <= 0.5 * step + 1e-12);
}

TEST_CASE("synchronize: 20-point phase grid decodes at the recovered phase")
{
    const ClockConfig cfg;
    const double step = cfg.period * cfg.phase_step;
    for (unsigned addr : {0b0001u, 0b0010u}) {
        for (int g = 0; g < 20; ++g) {
            const double offset = cfg.period * g / 20.0;
            CAPTURE(offset);
            const Sampler s = repeating_stream(Address(addr), offset);
            const double phase = synchronize(s, cfg);
            CHECK(phase >= 0.0);
            CHECK(phase < cfg.period);
            CHECK(circular_distance(phase, offset, cfg.period) <= 0.5 * step + 1e-12);
            CHECK(decode_at_phase(s, phase) == Address(addr));
        }
    }
}

TEST_CASE("synchronize: offset 0.4 of a period")
{
    const ClockConfig cfg;
    const double phase = synchronize(repeating_stream(Address(1), 0.4 * cfg.period), cfg);
    CHECK(circular_distance(phase, 0.4 * cfg.period, cfg.period) <= 0.05 * cfg.period + 1e-12);
}

TEST_CASE("synchronize: silent channel")
{
    CHECK_THROWS_AS(synchronize([](double) { return false; }, ClockConfig{}), NoSignal);
}

TEST_CASE("synchronize: search cycle fits in one frame time")
{
    const ClockConfig cfg;
    CHECK(cfg.phase_count() == 10);
    CHECK(cfg.cycle_bits() == 100);
    int calls = 0;
    const Sampler base = repeating_stream(Address(2), 0.37 * cfg.period);
    double latest = 0.0;
    synchronize(
        [&](double t) {
            ++calls;
            latest = std::max(latest, t);
            return base(t);
        },
        cfg);
    CHECK(latest < cfg.cycle_bits() * cfg.period);
    CHECK(calls == cfg.cycle_bits() * cfg.phase_count());
}

TEST_CASE("ClockConfig validation")
{
    ClockConfig c;
    c.period = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.phase_step = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.sync_window = 2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("end_of_packet fires at exactly 100")
{
    CHECK_FALSE(end_of_packet(7));
    CHECK_FALSE(end_of_packet(99));
    CHECK(end_of_packet(100));
    for (std::size_t n = 0; n < 200; ++n) CHECK(end_of_packet(n) == (n == 100));
}
