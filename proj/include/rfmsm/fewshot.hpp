#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rfmsm/checkpoint.hpp"
#include "rfmsm/iqcore.hpp"
#include "rfmsm/models.hpp"
#include "rfmsm/rng.hpp"

namespace rfmsm {

struct ShotSpec {
    std::size_t n = 1;
    std::uint64_t seed = 0;
};

/// The (class, snr) cells a labeled dataset is expected to cover: every
/// class in [0, n_cls) crossed with the declared SNR grid (or the observed
/// SNR values when no grid is declared).
inline std::vector<std::pair<int, int>> dataset_cells(const SignalDataset& ds) {
    std::vector<int> snrs = ds.meta.snr_grid;
    if (snrs.empty()) {
        for (const auto& l : ds.labels) snrs.push_back(l.snr_db);
        std::sort(snrs.begin(), snrs.end());
        snrs.erase(std::unique(snrs.begin(), snrs.end()), snrs.end());
    }
    std::vector<std::pair<int, int>> cells;
    for (int c = 0; c < ds.meta.n_cls; ++c) {
        for (int s : snrs) cells.emplace_back(c, s);
    }
    return cells;
}

/// Exactly `n` frames from every (class, snr) cell, drawn without replacement.
/// Candidates inside a cell are ordered by their stable id before drawing, so
/// the result depends only on the seed and the set of frames, not on their
/// order in memory. Output is cell-major (class, then SNR), ids ascending.
inline SignalDataset sample_nshot(const SignalDataset& ds, const ShotSpec& spec) {
    require(spec.n >= 1, ErrorCode::invalid_argument, "shot count n must be >= 1");
    require(ds.has_labels(), ErrorCode::invalid_argument, "n-shot sampling needs a labeled dataset");
    require(ds.meta.n_cls >= 1, ErrorCode::invalid_argument, "dataset declares no classes");

    std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;
    for (std::size_t p = 0; p < ds.size(); ++p) by_cell[{ds.labels[p].class_id, ds.labels[p].snr_db}].push_back(p);
    auto id_of = [&](std::size_t p) { return ds.ids.empty() ? static_cast<std::uint64_t>(p) : ds.ids[p]; };

    std::vector<std::size_t> chosen;
    for (const auto& cell : dataset_cells(ds)) {
        auto it = by_cell.find(cell);
        const std::size_t have = it == by_cell.end() ? 0 : it->second.size();
        if (have < spec.n) {
            fail(ErrorCode::insufficient_cell, "cell (class " + std::to_string(cell.first) + ", snr " +
                                                   std::to_string(cell.second) + " dB) has " + std::to_string(have) +
                                                   " frames, need " + std::to_string(spec.n));
        }
        std::vector<std::size_t> pool = it->second;
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return id_of(a) < id_of(b); });
        const auto snr_key = static_cast<std::uint64_t>(static_cast<std::int64_t>(cell.second) + (1LL << 31));
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(cell.first), snr_key));
        // partial Fisher-Yates: first n slots become the sample
        for (std::size_t k = 0; k < spec.n; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
            std::swap(pool[k], pool[j]);
        }
        pool.resize(spec.n);
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) { return id_of(a) < id_of(b); });
        chosen.insert(chosen.end(), pool.begin(), pool.end());
    }
    SignalDataset out = subset(ds, chosen);
    out.meta.name = ds.meta.name + "-" + std::to_string(spec.n) + "shot";
    return out;
}

struct DomainDescriptor {
    std::string name;
    std::size_t frame_len = 0;
    double t_res_us = 0.0;
    int n_cls = 0;

    static DomainDescriptor of(const SignalDataset& ds) {
        return {ds.meta.name, ds.meta.frame_len, ds.meta.t_res_us, ds.meta.n_cls};
    }

    void validate() const {
        require(!name.empty() && frame_len >= 1 && t_res_us > 0.0 && n_cls >= 1, ErrorCode::invalid_argument,
                "domain descriptor '" + name + "' is incomplete");
    }
};

inline nlohmann::json to_json(const DomainDescriptor& d) {
    return {{"name", d.name}, {"frame_len", d.frame_len}, {"t_res_us", d.t_res_us}, {"n_cls", d.n_cls}};
}

struct DomainPair {
    DomainDescriptor source;
    DomainDescriptor target;
};

/// Everything fine-tuning needs to attach a fresh probe for the target domain.
struct FinetuneBundle {
    ArchitectureDescriptor arch;
    ModelParams encoder;  // encoder.* arrays only
    std::size_t frame_len = 0;
    std::size_t flatten_dim = 0;
    std::size_t n_cls = 0;
    DomainPair pair;

    nlohmann::json provenance() const {
        return {{"source", to_json(pair.source)}, {"target", to_json(pair.target)}};
    }
};

/// Describes the source domain recorded in a pre-training checkpoint.
inline DomainDescriptor source_domain(const Checkpoint& ck) {
    DomainDescriptor d;
    const auto& p = ck.provenance;
    if (p.contains("dataset")) {
        const auto& ds = p.at("dataset");
        d.name = ds.value("name", std::string{});
        d.frame_len = ds.value("frame_len", std::size_t{0});
        d.t_res_us = ds.value("t_res_us", 0.0);
        d.n_cls = ds.value("n_cls", 0);
    }
    return d;
}

inline FinetuneBundle prepare_domain_pair(const DomainPair& pair, const Checkpoint& ck) {
    pair.target.validate();
    const ArchitectureDescriptor& arch = ck.params.arch;
    arch.validate();
    arch.require_length(pair.target.frame_len);
    FinetuneBundle b;
    b.arch = arch;
    b.encoder = ck.params.select("encoder.");
    require(!b.encoder.arrays.empty(), ErrorCode::shape_mismatch, "checkpoint holds no encoder parameters");
    b.frame_len = pair.target.frame_len;
    b.flatten_dim = arch.flatten_dim(pair.target.frame_len);
    b.n_cls = static_cast<std::size_t>(pair.target.n_cls);
    b.pair = pair;
    return b;
}

} // namespace rfmsm
