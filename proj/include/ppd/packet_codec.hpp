#pragma once

// Bit-level power packet framing: 010 clock-sync preamble, 4-bit destination
// address, then a continuously-on payload up to a fixed 100-bit length.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace ppd {

inline constexpr std::size_t kFrameBits = 100;
inline constexpr std::size_t kSyncBits = 3;
inline constexpr std::size_t kHeaderBits = 7;
inline constexpr std::size_t kPayloadBits = kFrameBits - kHeaderBits;
inline constexpr double kDefaultBitWidth = 100e-6;

class Address {
public:
    constexpr Address() = default;
    /// Throws std::invalid_argument outside [0, 15].
    explicit Address(unsigned value);

    /// Parses a 4-character binary code such as "0010".
    static Address from_bits(std::string_view code);

    constexpr std::uint8_t value() const noexcept { return value_; }
    std::string to_bits() const;

    friend constexpr auto operator<=>(const Address&, const Address&) = default;

private:
    std::uint8_t value_ = 0;
};

struct BitFrame {
    std::array<bool, kFrameBits> bits{};
    double bit_width = kDefaultBitWidth;

    /// Frame duration in seconds.
    double duration() const noexcept { return bit_width * static_cast<double>(kFrameBits); }
    /// True when the preamble, length and all-high payload invariants hold.
    bool well_formed() const noexcept;
};

struct ClockConfig {
    double period = kDefaultBitWidth;
    int sync_window = 10;
    double phase_step = 0.1;

    /// Throws std::invalid_argument on period <= 0, phase_step outside (0, 1]
    /// or sync_window < 3.
    void validate() const;
    /// Number of candidate phases per bit period.
    int phase_count() const;
    /// Bit periods in one full search cycle.
    int cycle_bits() const { return phase_count() * sync_window; }
};

/// Bit sampler over absolute time: returns the channel's logic level at t.
using Sampler = std::function<bool(double)>;

BitFrame encode_frame(Address address, double bit_width = kDefaultBitWidth);

/// Reads the address from phase-aligned samples (one per bit slot, at least
/// seven). Throws SyncError if slots 1-3 are not 0,1,0 and
/// std::invalid_argument if fewer than seven samples are given.
Address decode_header(std::span<const bool> samples);

/// Recovers the bit-boundary phase of a repeating packet stream.
///
/// The sampling instant is swept across the bit period in phase_step
/// increments over one search cycle (phase_count() * sync_window bit
/// periods). Transitions in the captured record fix the bit-boundary phase to
/// within half a phase step; the capture is then re-read at mid-bit for the
/// recovered phase and must contain a complete 010 + address + payload frame
/// structure. Returns the phase offset in [0, period).
///
/// Throws NoSignal when the channel is low for the whole cycle and SyncError
/// when transitions exist but no frame structure is found.
double synchronize(const Sampler& sampler, const ClockConfig& cfg);

/// True once a frame's bit counter reaches the fixed packet length.
constexpr bool end_of_packet(std::size_t bit_counter) noexcept
{
    return bit_counter == kFrameBits;
}

}  // namespace ppd
