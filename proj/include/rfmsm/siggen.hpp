#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rfmsm/iqcore.hpp"
#include "rfmsm/rng.hpp"

namespace rfmsm {

enum class WaveformClass : int {
    coherent = 0,
    barker = 1,
    polyphase_barker = 2,
    frank = 3,
    lfm = 4,
};

inline constexpr int kNumWaveformClasses = 5;

inline const std::vector<std::string>& waveform_class_names() {
    static const std::vector<std::string> names{"coherent_pulse", "barker", "polyphase_barker", "frank", "lfm"};
    return names;
}

namespace codes {

/// Binary Barker sequences as +1/-1.
inline std::vector<int> barker(int length) {
    switch (length) {
    case 2: return {1, -1};
    case 3: return {1, 1, -1};
    case 4: return {1, 1, -1, 1};
    case 5: return {1, 1, 1, -1, 1};
    case 7: return {1, 1, 1, -1, -1, 1, -1};
    case 11: return {1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1};
    case 13: return {1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1};
    default: fail(ErrorCode::invalid_argument, "no binary Barker code of length " + std::to_string(length));
    }
}

struct PolyphaseBarker {
    int alphabet = 1;         // phases are multiples of 2*pi/alphabet
    std::vector<int> phases;  // phase index per chip
};

/// M-ary polyphase sequences whose aperiodic autocorrelation sidelobes are
/// all <= 1 in magnitude (verified by the test suite).
inline PolyphaseBarker polyphase_barker(int length) {
    switch (length) {
    case 5: return {3, {0, 2, 2, 2, 0}};
    case 6: return {6, {0, 4, 3, 3, 4, 0}};
    case 7: return {3, {0, 0, 2, 2, 0, 2, 0}};
    case 8: return {6, {0, 4, 3, 2, 3, 3, 5, 1}};
    case 9: return {3, {0, 0, 2, 2, 0, 0, 1, 0, 1}};
    case 10: return {6, {0, 3, 1, 5, 5, 2, 3, 2, 2, 3}};
    case 12: return {6, {0, 0, 5, 4, 3, 0, 5, 1, 1, 3, 0, 2}};
    default: fail(ErrorCode::invalid_argument, "no polyphase Barker code of length " + std::to_string(length));
    }
}

/// Frank code phase (radians) of chip `n` for an M x M code.
inline double frank_phase(int m, int n) {
    const int row = n / m;
    const int col = n % m;
    return 2.0 * std::numbers::pi * static_cast<double>((row * col) % m) / static_cast<double>(m);
}

} // namespace codes

struct WaveformSpec {
    WaveformClass cls = WaveformClass::coherent;
    int n_pulses = 1;
    double pulse_width_us = 10.0;
    double pri_us = 20.0;
    double t0_us = 0.0;
    int code_length = 1;
    double chirp_bw_hz = 0.0;
    double initial_phase_rad = 0.0;

    double span_us() const { return t0_us + (n_pulses - 1) * pri_us + pulse_width_us; }

    void validate(std::size_t frame_len, double t_res_us) const {
        require(n_pulses >= 1, ErrorCode::invalid_argument, "n_pulses must be >= 1");
        require(pulse_width_us > 0.0 && t0_us >= 0.0, ErrorCode::invalid_argument,
                "pulse width must be positive and start delay non-negative");
        require(n_pulses == 1 || pri_us > pulse_width_us, ErrorCode::invalid_argument,
                "PRI must exceed pulse width");
        require(t_res_us > 0.0 && frame_len >= 1, ErrorCode::invalid_argument, "invalid frame geometry");
        require(span_us() <= static_cast<double>(frame_len) * t_res_us + 1e-9, ErrorCode::pulse_train_exceeds_frame,
                "pulse train exceeds frame");
        if (cls == WaveformClass::frank) {
            const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(code_length))));
            require(m >= 2 && m * m == code_length, ErrorCode::invalid_argument, "Frank code length must be M^2");
        }
    }
};

/// Sample indices [begin, end) covered by pulse `p`.
inline std::pair<std::size_t, std::size_t> pulse_extent(const WaveformSpec& spec, int p, double t_res_us,
                                                        std::size_t frame_len) {
    const double start = spec.t0_us + p * spec.pri_us;
    const double stop = start + spec.pulse_width_us;
    // sample n is active when start <= n * t_res < stop
    auto first_at_or_after = [&](double t) {
        const double x = t / t_res_us;
        auto n = static_cast<std::size_t>(std::ceil(x - 1e-9));
        return std::min(n, frame_len);
    };
    return {first_at_or_after(start), first_at_or_after(stop)};
}

/// Unit-amplitude rectangular pulse train with per-class intra-pulse coding.
/// Samples outside the pulses are exactly zero.
inline IQFrame generate_clean(const WaveformSpec& spec, std::size_t frame_len, double t_res_us) {
    spec.validate(frame_len, t_res_us);
    IQFrame frame = IQFrame::zeros(frame_len);

    std::vector<int> barker;
    codes::PolyphaseBarker poly;
    int frank_m = 0;
    if (spec.cls == WaveformClass::barker) barker = codes::barker(spec.code_length);
    if (spec.cls == WaveformClass::polyphase_barker) poly = codes::polyphase_barker(spec.code_length);
    if (spec.cls == WaveformClass::frank) frank_m = static_cast<int>(std::lround(std::sqrt(spec.code_length)));

    for (int p = 0; p < spec.n_pulses; ++p) {
        const auto [begin, end] = pulse_extent(spec, p, t_res_us, frame_len);
        const double start = spec.t0_us + p * spec.pri_us;
        for (std::size_t n = begin; n < end; ++n) {
            const double tau = static_cast<double>(n) * t_res_us - start;  // us into the pulse
            // a sample exactly on a chip boundary belongs to the later chip
            auto chip_of = [&](std::size_t chips) {
                const double pos = tau * static_cast<double>(chips) / spec.pulse_width_us + 1e-9;
                return std::min(static_cast<std::size_t>(std::max(pos, 0.0)), chips - 1);
            };
            double phase = 0.0;
            switch (spec.cls) {
            case WaveformClass::coherent:
                break;
            case WaveformClass::barker: {
                const std::size_t chip = chip_of(barker.size());
                phase = barker[chip] > 0 ? 0.0 : std::numbers::pi;
                break;
            }
            case WaveformClass::polyphase_barker: {
                const std::size_t chip = chip_of(poly.phases.size());
                phase = 2.0 * std::numbers::pi * poly.phases[chip] / poly.alphabet;
                break;
            }
            case WaveformClass::frank: {
                const auto chip = static_cast<int>(chip_of(static_cast<std::size_t>(spec.code_length)));
                phase = codes::frank_phase(frank_m, chip);
                break;
            }
            case WaveformClass::lfm: {
                // frequency sweeps linearly from -B/2 to +B/2 across the pulse
                const double bw_per_us = spec.chirp_bw_hz * 1e-6;
                phase = std::numbers::pi * bw_per_us * (tau * tau / spec.pulse_width_us - tau);
                break;
            }
            }
            phase += spec.initial_phase_rad;
            frame.i[n] = std::cos(phase);
            frame.q[n] = std::sin(phase);
        }
    }
    return frame;
}

/// Mean |s|^2 over samples that are nonzero (the pulse-active region).
inline double active_signal_power(const IQFrame& frame) {
    double power = 0.0;
    std::size_t active = 0;
    for (std::size_t n = 0; n < frame.length(); ++n) {
        const double p = frame.i[n] * frame.i[n] + frame.q[n] * frame.q[n];
        if (p > 0.0) {
            power += p;
            ++active;
        }
    }
    require(active > 0, ErrorCode::undefined_snr, "undefined SNR: frame has no nonzero samples");
    return power / static_cast<double>(active);
}

/// Adds complex AWGN so that active-region SNR equals `snr_db`.
/// Noise variance per channel is half the complex noise power.
inline IQFrame add_awgn(const IQFrame& frame, int snr_db, std::uint64_t rng_seed) {
    const double signal_power = active_signal_power(frame);
    const double noise_power = signal_power / std::pow(10.0, snr_db / 10.0);
    const double sigma = std::sqrt(noise_power / 2.0);
    Rng rng(rng_seed);
    IQFrame out = frame;
    for (std::size_t n = 0; n < out.length(); ++n) {
        out.i[n] += sigma * rng.normal();
        out.q[n] += sigma * rng.normal();
    }
    return out;
}

struct GeneratorConfig {
    std::size_t frame_len = 512;
    double t_res_us = 0.3;
    int n_classes = kNumWaveformClasses;
    int n_pulses_min = 2;
    int n_pulses_max = 6;
    double pulse_width_min_us = 10.0;
    double pulse_width_max_us = 16.0;
    double pri_min_us = 17.0;
    double pri_max_us = 23.0;
    std::vector<int> barker_lengths{2, 3, 4, 5, 7, 11, 13};
    std::vector<int> polyphase_lengths{5, 6, 7, 8, 9, 10, 12};
    std::vector<int> frank_orders{4, 6, 8};
    double lfm_bw_min_hz = 0.5e6;
    double lfm_bw_max_hz = 1.5e6;

    void validate() const {
        require(n_classes >= 1 && n_classes <= kNumWaveformClasses, ErrorCode::invalid_argument,
                "n_classes must be in [1, 5]");
        require(frame_len >= 1 && t_res_us > 0.0, ErrorCode::invalid_argument, "invalid frame geometry");
        require(n_pulses_min >= 1 && n_pulses_min <= n_pulses_max, ErrorCode::invalid_argument,
                "invalid n_pulses range");
        require(pulse_width_min_us > 0.0 && pulse_width_min_us <= pulse_width_max_us, ErrorCode::invalid_argument,
                "invalid pulse width range");
        require((pri_min_us <= pri_max_us && pri_min_us > pulse_width_max_us) || n_pulses_max == 1,
                ErrorCode::invalid_argument, "PRI range must exceed the pulse width range");
        require(!barker_lengths.empty() && !polyphase_lengths.empty() && !frank_orders.empty(),
                ErrorCode::invalid_argument, "code length sets must be nonempty");
        require(lfm_bw_min_hz <= lfm_bw_max_hz, ErrorCode::invalid_argument, "invalid LFM bandwidth range");
        const double worst = (n_pulses_max - 1) * pri_max_us + pulse_width_max_us;
        require(worst <= static_cast<double>(frame_len) * t_res_us, ErrorCode::pulse_train_exceeds_frame,
                "pulse train exceeds frame for the configured parameter ranges");
    }
};

/// Draws waveform parameters for one frame uniformly from the configured ranges.
inline WaveformSpec sample_waveform(WaveformClass cls, const GeneratorConfig& cfg, Rng& rng) {
    WaveformSpec spec;
    spec.cls = cls;
    spec.n_pulses = static_cast<int>(rng.uniform_int(cfg.n_pulses_min, cfg.n_pulses_max));
    spec.pulse_width_us = rng.uniform(cfg.pulse_width_min_us, cfg.pulse_width_max_us);
    spec.pri_us = rng.uniform(cfg.pri_min_us, cfg.pri_max_us);
    const double frame_us = static_cast<double>(cfg.frame_len) * cfg.t_res_us;
    const double slack = frame_us - ((spec.n_pulses - 1) * spec.pri_us + spec.pulse_width_us);
    spec.t0_us = rng.uniform(0.0, std::max(0.0, slack));
    auto pick = [&](const std::vector<int>& options) { return options[rng.below(options.size())]; };
    switch (cls) {
    case WaveformClass::coherent: spec.code_length = 1; break;
    case WaveformClass::barker: spec.code_length = pick(cfg.barker_lengths); break;
    case WaveformClass::polyphase_barker: spec.code_length = pick(cfg.polyphase_lengths); break;
    case WaveformClass::frank: {
        const int m = pick(cfg.frank_orders);
        spec.code_length = m * m;
        break;
    }
    case WaveformClass::lfm:
        spec.code_length = 1;
        spec.chirp_bw_hz = rng.uniform(cfg.lfm_bw_min_hz, cfg.lfm_bw_max_hz);
        break;
    }
    spec.initial_phase_rad = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return spec;
}

/// One labeled noisy frame; its randomness derives only from (seed, index).
inline IQFrame synthesize_frame(WaveformClass cls, int snr_db, const GeneratorConfig& cfg, std::uint64_t seed,
                                std::uint64_t index) {
    Rng rng(derive_seed(seed, index, 0));
    const WaveformSpec spec = sample_waveform(cls, cfg, rng);
    const IQFrame clean = generate_clean(spec, cfg.frame_len, cfg.t_res_us);
    return add_awgn(clean, snr_db, derive_seed(seed, index, 1));
}

/// Balanced corpus: n_frames_per_cell frames for every (class, snr) cell,
/// ordered class-major then SNR then repetition.
inline SignalDataset generate_corpus(std::size_t n_frames_per_cell, std::vector<int> snr_grid, std::uint64_t seed,
                                     const GeneratorConfig& cfg = {}) {
    cfg.validate();
    require(n_frames_per_cell >= 1, ErrorCode::invalid_argument, "n_frames_per_cell must be >= 1");
    require(!snr_grid.empty(), ErrorCode::invalid_argument, "snr_grid must be nonempty");
    std::sort(snr_grid.begin(), snr_grid.end());
    require(std::adjacent_find(snr_grid.begin(), snr_grid.end()) == snr_grid.end(), ErrorCode::invalid_argument,
            "snr_grid has duplicates");

    SignalDataset ds;
    ds.meta.name = "synthetic";
    ds.meta.n_cls = cfg.n_classes;
    ds.meta.t_res_us = cfg.t_res_us;
    ds.meta.frame_len = cfg.frame_len;
    ds.meta.snr_grid = snr_grid;
    ds.meta.class_names.assign(waveform_class_names().begin(), waveform_class_names().begin() + cfg.n_classes);

    const std::size_t total = static_cast<std::size_t>(cfg.n_classes) * snr_grid.size() * n_frames_per_cell;
    ds.frames.resize(total);
    ds.labels.resize(total);
    std::size_t index = 0;
    for (int c = 0; c < cfg.n_classes; ++c) {
        for (int snr : snr_grid) {
            for (std::size_t k = 0; k < n_frames_per_cell; ++k, ++index) {
                ds.frames[index] = synthesize_frame(static_cast<WaveformClass>(c), snr, cfg, seed, index);
                ds.labels[index] = {c, snr};
            }
        }
    }
    ds.assign_sequential_ids();
    return ds;
}

inline std::vector<int> snr_range(int lo, int hi, int step = 1) {
    require(step > 0 && lo <= hi, ErrorCode::invalid_argument, "invalid SNR range");
    std::vector<int> out;
    for (int s = lo; s <= hi; s += step) out.push_back(s);
    return out;
}

} // namespace rfmsm
