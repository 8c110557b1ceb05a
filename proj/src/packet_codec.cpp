#include "ppd/packet_codec.hpp"

#include "ppd/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ppd {

Address::Address(unsigned value)
{
    if (value > 15) {
        throw std::invalid_argument("address out of range [0, 15]: " + std::to_string(value));
    }
    value_ = static_cast<std::uint8_t>(value);
}

Address Address::from_bits(std::string_view code)
{
    if (code.size() != 4) {
        throw std::invalid_argument("address must be 4 binary digits: '" + std::string(code) + "'");
    }
    unsigned v = 0;
    for (char c : code) {
        if (c != '0' && c != '1') {
            throw std::invalid_argument("address must be 4 binary digits: '" + std::string(code) + "'");
        }
        v = (v << 1) | static_cast<unsigned>(c == '1');
    }
    return Address(v);
}

std::string Address::to_bits() const
{
    std::string s(4, '0');
    for (int i = 0; i < 4; ++i) {
        if (value_ & (1u << (3 - i))) s[static_cast<std::size_t>(i)] = '1';
    }
    return s;
}

bool BitFrame::well_formed() const noexcept
{
    if (bits[0] || !bits[1] || bits[2]) return false;
    for (std::size_t i = kHeaderBits; i < kFrameBits; ++i) {
        if (!bits[i]) return false;
    }
    return bit_width > 0.0;
}

void ClockConfig::validate() const
{
    if (!(period > 0.0)) throw std::invalid_argument("clock period must be positive");
    if (!(phase_step > 0.0 && phase_step <= 1.0)) {
        throw std::invalid_argument("phase_step must be in (0, 1]");
    }
    if (sync_window < 3) throw std::invalid_argument("sync_window must be at least 3 bit periods");
}

int ClockConfig::phase_count() const
{
    // 1/0.1 is 10.000000000000002 in binary; do not round that up to 11.
    return static_cast<int>(std::ceil(1.0 / phase_step - 1e-9));
}

BitFrame encode_frame(Address address, double bit_width)
{
    BitFrame frame;
    frame.bit_width = bit_width;
    frame.bits[0] = false;
    frame.bits[1] = true;
    frame.bits[2] = false;
    for (std::size_t i = 0; i < 4; ++i) {
        frame.bits[kSyncBits + i] = (address.value() >> (3 - i)) & 1u;
    }
    for (std::size_t i = kHeaderBits; i < kFrameBits; ++i) frame.bits[i] = true;
    return frame;
}

Address decode_header(std::span<const bool> samples)
{
    if (samples.size() < kHeaderBits) {
        throw std::invalid_argument("decode_header needs at least 7 bit slots");
    }
    if (samples[0] || !samples[1] || samples[2]) {
        throw SyncError("sync preamble 010 not found in header");
    }
    unsigned v = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        v = (v << 1) | static_cast<unsigned>(samples[kSyncBits + i]);
    }
    return Address(v);
}

namespace {

// Start index of a frame inside a mid-bit record, consistent with a
// back-to-back stream: 010 preamble, high slot before it (previous payload),
// high payload after the address, low slot where the next frame begins.
std::ptrdiff_t find_frame_start(const std::vector<bool>& bits)
{
    const auto n = static_cast<std::ptrdiff_t>(bits.size());
    for (std::ptrdiff_t s = 0; s + 2 < n; ++s) {
        if (bits[s] || !bits[s + 1] || bits[s + 2]) continue;
        if (s > 0 && !bits[s - 1]) continue;
        bool ok = true;
        const auto payload_end = std::min<std::ptrdiff_t>(s + static_cast<std::ptrdiff_t>(kFrameBits), n);
        for (auto j = s + static_cast<std::ptrdiff_t>(kHeaderBits); j < payload_end; ++j) {
            if (!bits[j]) {
                ok = false;
                break;
            }
        }
        if (ok && s + static_cast<std::ptrdiff_t>(kFrameBits) < n &&
            bits[s + static_cast<std::ptrdiff_t>(kFrameBits)]) {
            ok = false;
        }
        if (ok) return s;
    }
    return -1;
}

}  // namespace

double synchronize(const Sampler& sampler, const ClockConfig& cfg)
{
    cfg.validate();
    const int per_bit = cfg.phase_count();
    const double step = cfg.period / per_bit;
    const auto total = static_cast<std::size_t>(cfg.cycle_bits()) * static_cast<std::size_t>(per_bit);

    std::vector<bool> capture(total);
    bool any_high = false;
    for (std::size_t i = 0; i < total; ++i) {
        capture[i] = sampler(static_cast<double>(i) * step);
        any_high = any_high || capture[i];
    }
    if (!any_high) throw NoSignal("channel low for a full synchronization cycle");

    std::size_t edge = 0;
    for (std::size_t i = 1; i < total; ++i) {
        if (capture[i] != capture[i - 1]) {
            edge = i;
            break;
        }
    }
    if (edge == 0) throw SyncError("no bit transitions observed during synchronization");

    // The transition lies in ((edge-1)*step, edge*step]; take the midpoint.
    const double edge_time = (static_cast<double>(edge) - 0.5) * step;
    double phase = std::fmod(edge_time, cfg.period);
    if (phase < 0.0) phase += cfg.period;

    // Re-read at mid-bit from the earliest slot inside the capture.
    const double first_mid = phase + 0.5 * cfg.period >= cfg.period ? phase - 0.5 * cfg.period : phase + 0.5 * cfg.period;
    std::vector<bool> bits;
    for (std::size_t k = 0;; ++k) {
        const double mid = first_mid + static_cast<double>(k) * cfg.period;
        const auto idx = static_cast<std::size_t>(std::floor(mid / step));
        if (idx >= total) break;
        bits.push_back(capture[idx]);
    }
    if (find_frame_start(bits) < 0) {
        throw SyncError("transitions found but no 010 frame structure at the recovered phase");
    }
    return phase;
}

}  // namespace ppd
