#pragma once

#include "ncs/rng.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace ncs {

enum class ChannelMode { strict_collision, offset_capture };

[[nodiscard]] std::string_view to_string(ChannelMode m);
[[nodiscard]] ChannelMode parse_channel_mode(std::string_view name);

// Durations are integer microseconds.
struct ChannelConfig {
    ChannelMode mode = ChannelMode::strict_collision;
    double erasure_prob = 0.0;
    std::int64_t tx_duration_us = 3000;
    std::int64_t slot_duration_us = 10000;
    double capture_prob = 0.1;

    void validate() const;

    // Lossless slots, no capture: the regime the closed forms assume.
    [[nodiscard]] static ChannelConfig ideal() { return {}; }
    // Unsynchronized offsets, rare overlap capture, 5% erasures.
    [[nodiscard]] static ChannelConfig testbed() {
        return ChannelConfig{ChannelMode::offset_capture, 0.05, 3000, 10000, 0.1};
    }
};

struct SlotTransmission {
    int loop = 0;
    std::int64_t offset_us = 0; // start within the slot
};

// Draws a start offset in [0, slot - tx]; always 0 under strict_collision.
[[nodiscard]] std::int64_t draw_offset(const ChannelConfig& cfg, Rng& rng);

// Same as draw_offset but ignores the mode (unslotted ALOHA).
[[nodiscard]] std::int64_t draw_async_offset(const ChannelConfig& cfg, Rng& rng);

// Loop ids decoded from one slot, in input order.
[[nodiscard]] std::vector<int> resolve_slot(const std::vector<SlotTransmission>& txs, const ChannelConfig& cfg,
                                            Rng& rng);

// Overlap rule of offset_capture, applied regardless of mode.
[[nodiscard]] std::vector<int> resolve_overlaps(const std::vector<SlotTransmission>& txs, const ChannelConfig& cfg,
                                                Rng& rng);

// Single collision-free transmission, decoded w.p. 1 - erasure_prob.
[[nodiscard]] bool resolve_pointtopoint(const ChannelConfig& cfg, Rng& rng);

} // namespace ncs
