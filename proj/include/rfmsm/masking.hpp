#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfmsm/iqcore.hpp"
#include "rfmsm/rng.hpp"

namespace rfmsm {

/// A: random zero, B: block zero, C: random noise, D: block noise.
enum class MaskStrategy : int { A = 0, B = 1, C = 2, D = 3 };

inline constexpr MaskStrategy kAllStrategies[] = {MaskStrategy::A, MaskStrategy::B, MaskStrategy::C,
                                                  MaskStrategy::D};

inline char strategy_char(MaskStrategy s) { return static_cast<char>('A' + static_cast<int>(s)); }

inline MaskStrategy parse_strategy(std::string_view text) {
    require(text.size() == 1 && text[0] >= 'A' && text[0] <= 'D', ErrorCode::invalid_argument,
            "masking strategy must be one of A, B, C, D (got '" + std::string(text) + "')");
    return static_cast<MaskStrategy>(text[0] - 'A');
}

inline bool is_block(MaskStrategy s) { return s == MaskStrategy::B || s == MaskStrategy::D; }
inline bool is_noise(MaskStrategy s) { return s == MaskStrategy::C || s == MaskStrategy::D; }

struct MaskSpec {
    MaskStrategy strategy = MaskStrategy::A;
    double ratio = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(ratio >= 0.0 && ratio <= 1.0, ErrorCode::invalid_argument,
                "masking ratio must lie in [0, 1], got " + std::to_string(ratio));
    }
};

struct NoiseModel {
    double mean = 0.0;
    double variance = 1.0;
};

struct MaskedFrame {
    IQFrame signal;
    std::vector<bool> mask;
};

/// Block length round(R * L), half away from zero.
inline std::size_t block_length(double ratio, std::size_t length) {
    return static_cast<std::size_t>(std::lround(ratio * static_cast<double>(length)));
}

/// Draws the set of masked positions. Positions are shared by I and Q.
inline std::vector<bool> draw_mask(std::size_t length, MaskStrategy strategy, double ratio, Rng& rng) {
    std::vector<bool> mask(length, false);
    if (ratio <= 0.0) return mask;
    if (is_block(strategy)) {
        const std::size_t len = std::min(block_length(ratio, length), length);
        const std::size_t start = static_cast<std::size_t>(rng.below(length - len + 1));
        std::fill(mask.begin() + static_cast<std::ptrdiff_t>(start),
                  mask.begin() + static_cast<std::ptrdiff_t>(start + len), true);
    } else {
        for (std::size_t n = 0; n < length; ++n) mask[n] = rng.uniform() < ratio;
    }
    return mask;
}

/// Corrupts I/Q channels in place at masked positions: zeroed for A/B,
/// Gaussian noise added for C/D.
template <class T>
void corrupt_channels(std::span<T> i, std::span<T> q, const std::vector<bool>& mask, MaskStrategy strategy,
                      const NoiseModel& noise, Rng& rng) {
    const double sd = std::sqrt(noise.variance);
    for (std::size_t n = 0; n < mask.size(); ++n) {
        if (!mask[n]) continue;
        if (is_noise(strategy)) {
            i[n] += static_cast<T>(noise.mean + sd * rng.normal());
            q[n] += static_cast<T>(noise.mean + sd * rng.normal());
        } else {
            i[n] = T(0);
            q[n] = T(0);
        }
    }
}

inline void validate_mask_inputs(const MaskSpec& spec, const NoiseModel& noise) {
    spec.validate();
    if (is_noise(spec.strategy)) {
        require(noise.variance > 0.0 && std::isfinite(noise.variance) && std::isfinite(noise.mean),
                ErrorCode::degenerate_noise, "degenerate noise model");
    }
}

inline MaskedFrame apply_mask(const IQFrame& frame, const MaskSpec& spec, const NoiseModel& noise) {
    frame.validate();
    validate_mask_inputs(spec, noise);
    Rng rng(spec.seed);
    MaskedFrame out{frame, draw_mask(frame.length(), spec.strategy, spec.ratio, rng)};
    corrupt_channels(std::span<double>(out.signal.i), std::span<double>(out.signal.q), out.mask, spec.strategy,
                     noise, rng);
    return out;
}

inline double masked_fraction(const MaskedFrame& masked) {
    if (masked.mask.empty()) return 0.0;
    const auto count = std::count(masked.mask.begin(), masked.mask.end(), true);
    return static_cast<double>(count) / static_cast<double>(masked.mask.size());
}

} // namespace rfmsm
