#include "ncs/channel.hpp"
#include "ncs/linalg.hpp"

#include <string>

namespace ncs {

std::string_view to_string(ChannelMode m) {
    switch (m) {
    case ChannelMode::strict_collision:
        return "strict_collision";
    case ChannelMode::offset_capture:
        return "offset_capture";
    }
    return "?";
}

ChannelMode parse_channel_mode(std::string_view name) {
    if (name == "strict_collision" || name == "strict") {
        return ChannelMode::strict_collision;
    }
    if (name == "offset_capture" || name == "testbed") {
        return ChannelMode::offset_capture;
    }
    throw ConfigError("unknown channel mode '" + std::string(name) + "'");
}

void ChannelConfig::validate() const {
    if (!(erasure_prob >= 0.0 && erasure_prob < 1.0)) {
        throw ConfigError("channel: erasure_prob must lie in [0, 1)");
    }
    if (!(capture_prob >= 0.0 && capture_prob <= 1.0)) {
        throw ConfigError("channel: capture_prob must lie in [0, 1]");
    }
    if (tx_duration_us <= 0 || slot_duration_us <= 0) {
        throw ConfigError("channel: durations must be positive");
    }
    if (tx_duration_us > slot_duration_us) {
        throw ConfigError("channel: tx_duration exceeds slot_duration");
    }
}

std::int64_t draw_async_offset(const ChannelConfig& cfg, Rng& rng) {
    const std::int64_t span = cfg.slot_duration_us - cfg.tx_duration_us;
    return span <= 0 ? 0 : std::uniform_int_distribution<std::int64_t>(0, span)(rng);
}

std::int64_t draw_offset(const ChannelConfig& cfg, Rng& rng) {
    if (cfg.mode == ChannelMode::strict_collision) {
        return 0;
    }
    return draw_async_offset(cfg, rng);
}

std::vector<int> resolve_overlaps(const std::vector<SlotTransmission>& txs, const ChannelConfig& cfg, Rng& rng) {
    const std::size_t n = txs.size();
    std::vector<char> alive(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto a = txs[i].offset_us;
            const auto b = txs[j].offset_us;
            const bool overlap = a < b + cfg.tx_duration_us && b < a + cfg.tx_duration_us;
            if (overlap && !bernoulli(rng, cfg.capture_prob)) {
                alive[i] = 0;
                alive[j] = 0;
            }
        }
    }
    std::vector<int> decoded;
    for (std::size_t i = 0; i < n; ++i) {
        if (alive[i] && !bernoulli(rng, cfg.erasure_prob)) {
            decoded.push_back(txs[i].loop);
        }
    }
    return decoded;
}

std::vector<int> resolve_slot(const std::vector<SlotTransmission>& txs, const ChannelConfig& cfg, Rng& rng) {
    if (cfg.mode == ChannelMode::offset_capture) {
        return resolve_overlaps(txs, cfg, rng);
    }
    std::vector<int> decoded;
    if (txs.size() == 1 && !bernoulli(rng, cfg.erasure_prob)) {
        decoded.push_back(txs.front().loop);
    }
    return decoded;
}

bool resolve_pointtopoint(const ChannelConfig& cfg, Rng& rng) {
    return !bernoulli(rng, cfg.erasure_prob);
}

} // namespace ncs
