#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "rfmsm/error.hpp"
#include "rfmsm/rng.hpp"

namespace rfmsm {

/// One fixed-length complex baseband signal held as two real channels.
struct IQFrame {
    std::vector<double> i;
    std::vector<double> q;

    IQFrame() = default;
    IQFrame(std::vector<double> i_samples, std::vector<double> q_samples)
        : i(std::move(i_samples)), q(std::move(q_samples)) {}

    static IQFrame zeros(std::size_t length) {
        return IQFrame(std::vector<double>(length, 0.0), std::vector<double>(length, 0.0));
    }

    std::size_t length() const noexcept { return i.size(); }

    void validate() const {
        require(!i.empty(), ErrorCode::invalid_argument, "IQ frame must have at least one sample");
        require(i.size() == q.size(), ErrorCode::shape_mismatch, "I and Q lengths differ");
        for (std::size_t n = 0; n < i.size(); ++n) {
            if (!std::isfinite(i[n]) || !std::isfinite(q[n])) {
                fail(ErrorCode::numerical_failure, "non-finite sample at index " + std::to_string(n));
            }
        }
    }

    friend bool operator==(const IQFrame&, const IQFrame&) = default;
};

struct FrameLabel {
    int class_id = 0;
    int snr_db = 0;

    friend bool operator==(const FrameLabel&, const FrameLabel&) = default;
    friend auto operator<=>(const FrameLabel&, const FrameLabel&) = default;
};

struct DatasetMeta {
    std::string name;
    int n_cls = 0;
    double t_res_us = 1.0;
    std::size_t frame_len = 0;
    std::vector<int> snr_grid;
    std::vector<std::string> class_names;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Frames plus optional labels. `ids` are stable per-frame keys assigned at
/// ingestion (file position or generation index) and travel with the frame
/// through subsetting, so sampling does not depend on in-memory order.
struct SignalDataset {
    std::vector<IQFrame> frames;
    std::vector<FrameLabel> labels;
    std::vector<std::uint64_t> ids;
    DatasetMeta meta;

    std::size_t size() const noexcept { return frames.size(); }
    bool empty() const noexcept { return frames.empty(); }
    bool has_labels() const noexcept { return !labels.empty(); }

    void assign_sequential_ids() {
        ids.resize(frames.size());
        std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    }

    void validate() const {
        require(std::adjacent_find(meta.snr_grid.begin(), meta.snr_grid.end(),
                                   [](int a, int b) { return a >= b; }) == meta.snr_grid.end(),
                ErrorCode::invalid_argument, "snr_grid must be strictly increasing");
        require(labels.empty() || labels.size() == frames.size(), ErrorCode::label_count_mismatch,
                "label count " + std::to_string(labels.size()) + " != frame count " +
                    std::to_string(frames.size()));
        require(ids.empty() || ids.size() == frames.size(), ErrorCode::shape_mismatch,
                "id count does not match frame count");
        for (const auto& f : frames) {
            f.validate();
            require(f.length() == meta.frame_len, ErrorCode::shape_mismatch,
                    "frame length " + std::to_string(f.length()) + " != declared frame_len " +
                        std::to_string(meta.frame_len));
        }
        for (const auto& l : labels) {
            require(l.class_id >= 0 && l.class_id < meta.n_cls, ErrorCode::invalid_argument,
                    "class id " + std::to_string(l.class_id) + " outside [0, n_cls)");
            require(meta.snr_grid.empty() ||
                        std::binary_search(meta.snr_grid.begin(), meta.snr_grid.end(), l.snr_db),
                    ErrorCode::invalid_argument,
                    "snr " + std::to_string(l.snr_db) + " dB not in declared grid");
        }
    }
};

/// Dataset restricted to the given positions, in the given order.
inline SignalDataset subset(const SignalDataset& ds, const std::vector<std::size_t>& positions) {
    SignalDataset out;
    out.meta = ds.meta;
    out.frames.reserve(positions.size());
    for (auto p : positions) {
        out.frames.push_back(ds.frames.at(p));
        if (ds.has_labels()) out.labels.push_back(ds.labels.at(p));
        out.ids.push_back(ds.ids.empty() ? p : ds.ids.at(p));
    }
    return out;
}

struct StandardizationStats {
    double mean_i = 0.0;
    double mean_q = 0.0;
    double var_i = 1.0;
    double var_q = 1.0;

    void validate() const {
        require(var_i > 0.0 && var_q > 0.0 && std::isfinite(var_i) && std::isfinite(var_q),
                ErrorCode::degenerate_variance, "degenerate variance in standardization stats");
    }

    friend bool operator==(const StandardizationStats&, const StandardizationStats&) = default;
};

/// Per-channel population mean and variance over every sample of every frame.
inline StandardizationStats compute_stats(const std::vector<IQFrame>& frames) {
    require(!frames.empty(), ErrorCode::empty_corpus, "empty corpus");
    double sum_i = 0.0, sum_q = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames) {
        for (std::size_t n = 0; n < f.length(); ++n) {
            sum_i += f.i[n];
            sum_q += f.q[n];
        }
        count += f.length();
    }
    require(count > 0, ErrorCode::empty_corpus, "empty corpus");
    StandardizationStats s;
    s.mean_i = sum_i / static_cast<double>(count);
    s.mean_q = sum_q / static_cast<double>(count);
    double ss_i = 0.0, ss_q = 0.0;
    for (const auto& f : frames) {
        for (std::size_t n = 0; n < f.length(); ++n) {
            const double di = f.i[n] - s.mean_i;
            const double dq = f.q[n] - s.mean_q;
            ss_i += di * di;
            ss_q += dq * dq;
        }
    }
    s.var_i = ss_i / static_cast<double>(count);
    s.var_q = ss_q / static_cast<double>(count);
    require(s.var_i > 0.0, ErrorCode::degenerate_variance, "degenerate variance on I channel");
    require(s.var_q > 0.0, ErrorCode::degenerate_variance, "degenerate variance on Q channel");
    return s;
}

inline StandardizationStats compute_stats(const SignalDataset& dataset) {
    return compute_stats(dataset.frames);
}

inline IQFrame standardize(const IQFrame& frame, const StandardizationStats& stats) {
    stats.validate();
    const double si = std::sqrt(stats.var_i);
    const double sq = std::sqrt(stats.var_q);
    IQFrame out = frame;
    for (auto& x : out.i) x = (x - stats.mean_i) / si;
    for (auto& x : out.q) x = (x - stats.mean_q) / sq;
    return out;
}

inline IQFrame destandardize(const IQFrame& frame, const StandardizationStats& stats) {
    stats.validate();
    const double si = std::sqrt(stats.var_i);
    const double sq = std::sqrt(stats.var_q);
    IQFrame out = frame;
    for (auto& x : out.i) x = x * si + stats.mean_i;
    for (auto& x : out.q) x = x * sq + stats.mean_q;
    return out;
}

inline SignalDataset standardize(SignalDataset dataset, const StandardizationStats& stats) {
    for (auto& f : dataset.frames) f = standardize(f, stats);
    return dataset;
}

struct DatasetSplit {
    SignalDataset train;
    SignalDataset val;
    SignalDataset test;
};

/// Seeded Fisher-Yates permutation, then floor(0.7N) / floor(0.2N) / rest.
inline DatasetSplit split_70_20_10(const SignalDataset& dataset, std::uint64_t seed) {
    const std::size_t n = dataset.size();
    require(n >= 10, ErrorCode::too_small,
            "dataset too small to split: " + std::to_string(n) + " frames (need >= 10)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x5b1f));
    rng.shuffle(std::span<std::size_t>(order));

    const std::size_t n_train = n * 7 / 10;
    const std::size_t n_val = n * 2 / 10;
    auto slice = [&](std::size_t lo, std::size_t hi) {
        return subset(dataset, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                        order.begin() + static_cast<std::ptrdiff_t>(hi)));
    };
    return {slice(0, n_train), slice(n_train, n_train + n_val), slice(n_train + n_val, n)};
}

} // namespace rfmsm
