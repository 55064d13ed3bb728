#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfmsm/eval.hpp"
#include "rfmsm/hash.hpp"
#include "rfmsm/siggen.hpp"
#include "rfmsm/train.hpp"

namespace rfmsm {

/// Generator settings plus the corpus sizes drawn from them.
struct GeneratorSection {
    GeneratorConfig waveform;
    int snr_min_db = -20;
    int snr_max_db = 20;
    int snr_step_db = 1;
    std::size_t frames_per_cell = 100;
    std::size_t test_frames_per_cell = 50;

    std::vector<int> snr_grid() const { return snr_range(snr_min_db, snr_max_db, snr_step_db); }

    void validate() const {
        waveform.validate();
        require(snr_step_db > 0 && snr_min_db <= snr_max_db, ErrorCode::config, "invalid SNR range");
        require(frames_per_cell >= 1 && test_frames_per_cell >= 1, ErrorCode::config,
                "frames_per_cell and test_frames_per_cell must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const GeneratorSection& g) {
    const auto& w = g.waveform;
    j = {{"frame_len", w.frame_len},
         {"t_res_us", w.t_res_us},
         {"n_classes", w.n_classes},
         {"n_pulses_min", w.n_pulses_min},
         {"n_pulses_max", w.n_pulses_max},
         {"pulse_width_min_us", w.pulse_width_min_us},
         {"pulse_width_max_us", w.pulse_width_max_us},
         {"pri_min_us", w.pri_min_us},
         {"pri_max_us", w.pri_max_us},
         {"barker_lengths", w.barker_lengths},
         {"polyphase_lengths", w.polyphase_lengths},
         {"frank_orders", w.frank_orders},
         {"lfm_bw_min_hz", w.lfm_bw_min_hz},
         {"lfm_bw_max_hz", w.lfm_bw_max_hz},
         {"snr_min_db", g.snr_min_db},
         {"snr_max_db", g.snr_max_db},
         {"snr_step_db", g.snr_step_db},
         {"frames_per_cell", g.frames_per_cell},
         {"test_frames_per_cell", g.test_frames_per_cell}};
}

inline void from_json(const nlohmann::json& j, GeneratorSection& g) {
    const std::string sec = "generator";
    detail::reject_unknown_keys(
        j, {"frame_len", "t_res_us", "n_classes", "n_pulses_min", "n_pulses_max", "pulse_width_min_us",
            "pulse_width_max_us", "pri_min_us", "pri_max_us", "barker_lengths", "polyphase_lengths", "frank_orders",
            "lfm_bw_min_hz", "lfm_bw_max_hz", "snr_min_db", "snr_max_db", "snr_step_db", "frames_per_cell",
            "test_frames_per_cell"},
        sec);
    auto& w = g.waveform;
    detail::read_key(j, "frame_len", w.frame_len, sec);
    detail::read_key(j, "t_res_us", w.t_res_us, sec);
    detail::read_key(j, "n_classes", w.n_classes, sec);
    detail::read_key(j, "n_pulses_min", w.n_pulses_min, sec);
    detail::read_key(j, "n_pulses_max", w.n_pulses_max, sec);
    detail::read_key(j, "pulse_width_min_us", w.pulse_width_min_us, sec);
    detail::read_key(j, "pulse_width_max_us", w.pulse_width_max_us, sec);
    detail::read_key(j, "pri_min_us", w.pri_min_us, sec);
    detail::read_key(j, "pri_max_us", w.pri_max_us, sec);
    detail::read_key(j, "barker_lengths", w.barker_lengths, sec);
    detail::read_key(j, "polyphase_lengths", w.polyphase_lengths, sec);
    detail::read_key(j, "frank_orders", w.frank_orders, sec);
    detail::read_key(j, "lfm_bw_min_hz", w.lfm_bw_min_hz, sec);
    detail::read_key(j, "lfm_bw_max_hz", w.lfm_bw_max_hz, sec);
    detail::read_key(j, "snr_min_db", g.snr_min_db, sec);
    detail::read_key(j, "snr_max_db", g.snr_max_db, sec);
    detail::read_key(j, "snr_step_db", g.snr_step_db, sec);
    detail::read_key(j, "frames_per_cell", g.frames_per_cell, sec);
    detail::read_key(j, "test_frames_per_cell", g.test_frames_per_cell, sec);
}

struct EvalSection {
    std::size_t n_shot = 1;
    std::size_t pca_dims = 50;
    std::size_t batch_size = kEvalBatch;

    void validate() const {
        require(n_shot >= 1, ErrorCode::config, "eval.n_shot must be >= 1");
        require(pca_dims >= 1, ErrorCode::config, "eval.pca_dims must be >= 1");
        require(batch_size >= 1, ErrorCode::config, "eval.batch_size must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const EvalSection& e) {
    j = {{"n_shot", e.n_shot}, {"pca_dims", e.pca_dims}, {"batch_size", e.batch_size}};
}

inline void from_json(const nlohmann::json& j, EvalSection& e) {
    const std::string sec = "eval";
    detail::reject_unknown_keys(j, {"n_shot", "pca_dims", "batch_size"}, sec);
    detail::read_key(j, "n_shot", e.n_shot, sec);
    detail::read_key(j, "pca_dims", e.pca_dims, sec);
    detail::read_key(j, "batch_size", e.batch_size, sec);
}

struct SweepSection {
    std::vector<std::string> strategies{"A", "B", "C", "D"};
    std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::uint64_t> seeds{0};

    SweepPlan plan(std::size_t jobs) const {
        SweepPlan p;
        p.strategies.clear();
        for (const auto& s : strategies) p.strategies.push_back(parse_strategy(s));
        p.ratios = ratios;
        p.seeds = seeds;
        p.jobs = jobs;
        return p;
    }

    void validate() const {
        require(!strategies.empty() && !ratios.empty() && !seeds.empty(), ErrorCode::config,
                "sweep strategies, ratios and seeds must be nonempty");
        for (const auto& s : strategies) parse_strategy(s);
        for (double r : ratios) require(r >= 0.0 && r <= 1.0, ErrorCode::config, "sweep ratio outside [0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const SweepSection& s) {
    j = {{"strategies", s.strategies}, {"ratios", s.ratios}, {"seeds", s.seeds}};
}

inline void from_json(const nlohmann::json& j, SweepSection& s) {
    const std::string sec = "sweep";
    detail::reject_unknown_keys(j, {"strategies", "ratios", "seeds"}, sec);
    detail::read_key(j, "strategies", s.strategies, sec);
    detail::read_key(j, "ratios", s.ratios, sec);
    detail::read_key(j, "seeds", s.seeds, sec);
}

struct SeedSection {
    std::uint64_t generator = 1;
    std::uint64_t pretrain = 0;
    std::uint64_t finetune = 0;
    std::uint64_t shots = 0;
};

inline void to_json(nlohmann::json& j, const SeedSection& s) {
    j = {{"generator", s.generator}, {"pretrain", s.pretrain}, {"finetune", s.finetune}, {"shots", s.shots}};
}

inline void from_json(const nlohmann::json& j, SeedSection& s) {
    const std::string sec = "seeds";
    detail::reject_unknown_keys(j, {"generator", "pretrain", "finetune", "shots"}, sec);
    detail::read_key(j, "generator", s.generator, sec);
    detail::read_key(j, "pretrain", s.pretrain, sec);
    detail::read_key(j, "finetune", s.finetune, sec);
    detail::read_key(j, "shots", s.shots, sec);
}

struct PathSection {
    std::string log_dir;  // empty: logs are written next to each output
};

/// The whole experiment in one JSON document. Absent sections and keys
/// take their defaults; unknown keys are errors.
struct ExperimentConfig {
    GeneratorSection generator;
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    EvalSection eval;
    SweepSection sweep;
    PathSection paths;
    SeedSection seeds;

    void validate() const {
        generator.validate();
        pretrain.validate();
        finetune.validate();
        eval.validate();
        sweep.validate();
    }

    /// Hash of the canonical serialization (compact JSON, sorted keys).
    std::string hash() const { return json_hash(to_json()); }

    /// Seeds are overridden in one place so every derived config agrees.
    void override_seed(std::uint64_t seed) {
        seeds.generator = seed;
        seeds.pretrain = seed;
        seeds.finetune = seed;
        seeds.shots = seed;
    }

    PretrainConfig pretrain_config() const {
        PretrainConfig c = pretrain;
        c.seed = seeds.pretrain;
        c.config_hash = hash();
        return c;
    }

    FinetuneConfig finetune_config() const {
        FinetuneConfig c = finetune;
        c.seed = seeds.finetune;
        c.config_hash = hash();
        return c;
    }

    nlohmann::json to_json() const {
        nlohmann::json pre = pretrain;
        return {{"generator", generator}, {"pretrain", pre},           {"finetune", finetune},
                {"eval", eval},           {"sweep", sweep},            {"paths", {{"log_dir", paths.log_dir}}},
                {"seeds", seeds}};
    }
};

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig c;
    detail::reject_unknown_keys(j, {"generator", "pretrain", "finetune", "eval", "sweep", "paths", "seeds"}, "config");
    try {
        if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorSection>();
        if (j.contains("pretrain")) c.pretrain = j.at("pretrain").get<PretrainConfig>();
        if (j.contains("finetune")) c.finetune = j.at("finetune").get<FinetuneConfig>();
        if (j.contains("eval")) c.eval = j.at("eval").get<EvalSection>();
        if (j.contains("sweep")) c.sweep = j.at("sweep").get<SweepSection>();
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<SeedSection>();
        if (j.contains("paths")) {
            detail::reject_unknown_keys(j.at("paths"), {"log_dir"}, "paths");
            detail::read_key(j.at("paths"), "log_dir", c.paths.log_dir, "paths");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, std::string("invalid config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::config) throw;
        fail(ErrorCode::config, std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(is.is_open(), ErrorCode::config, "cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::config, "config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_experiment_config(j);
}

} // namespace rfmsm
