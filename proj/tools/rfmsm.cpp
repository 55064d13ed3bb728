// rfmsm: command-line front end for the masked signal modelling pipeline.
//
//   rfmsm generate --config c.json --out corpus.rfm [--set train|test]
//   rfmsm pretrain --config c.json --corpus corpus.rfm --out ae.rfckpt
//   rfmsm finetune --config c.json --checkpoint ae.rfckpt --data pool.rfm --out clf.rfckpt
//   rfmsm baseline --config c.json --data pool.rfm --out base.rfckpt
//   rfmsm evaluate --checkpoint clf.rfckpt --data test.rfm --out metrics.json
//   rfmsm sweep    --config c.json --corpus corpus.rfm --data pool.rfm --test test.rfm --out dir/
//   rfmsm embed    --config c.json --checkpoint clf.rfckpt --data test.rfm --out emb.bin
//   rfmsm plot     --heatmap dir/heatmap.csv --out fig.svg
//   rfmsm plot     --metrics a.json --metrics b.json --out snr.svg
//   rfmsm inspect  FILE
//
// Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rfmsm/canonical_io.hpp"
#include "rfmsm/checkpoint.hpp"
#include "rfmsm/config.hpp"
#include "rfmsm/eval.hpp"
#include "rfmsm/fewshot.hpp"
#include "rfmsm/plot.hpp"
#include "rfmsm/siggen.hpp"
#include "rfmsm/train.hpp"

namespace fs = std::filesystem;
using namespace rfmsm;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level log_level() {
    const char* env = std::getenv("RFMSM_LOG");
    if (!env) return Level::info;
    const std::string v = env;
    if (v == "error") return Level::error;
    if (v == "warn") return Level::warn;
    if (v == "debug") return Level::debug;
    return Level::info;
}

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::cerr << "[rfmsm " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

struct Options {
    std::string config;
    std::string out;
    std::string corpus;
    std::string data;
    std::string test;
    std::string checkpoint;
    std::string set = "train";
    std::string heatmap;
    std::vector<std::string> metrics;
    std::string input;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;
    bool deterministic = false;
};

ExperimentConfig load_config(const Options& o) {
    ExperimentConfig cfg;
    if (!o.config.empty()) cfg = load_experiment_config(o.config);
    if (o.seed_override) cfg.override_seed(*o.seed_override);
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.is_open(), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    os << text;
    require(static_cast<bool>(os), ErrorCode::io, "write to '" + path.string() + "' failed");
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

/// JSON-lines training log next to `out` (or in paths.log_dir).
class LogFile {
public:
    LogFile(const ExperimentConfig& cfg, const fs::path& out) {
        fs::path dir = cfg.paths.log_dir.empty() ? out.parent_path() : fs::path(cfg.paths.log_dir);
        if (!dir.empty()) fs::create_directories(dir);
        path_ = dir / (out.filename().string() + ".log.jsonl");
        os_.open(path_, std::ios::trunc);
        require(os_.is_open(), ErrorCode::io, "cannot open log '" + path_.string() + "'");
    }

    TrainLog sink() {
        return [this](const nlohmann::json& rec) {
            os_ << rec.dump() << '\n';
            os_.flush();
            log(Level::debug, rec.dump());
        };
    }

private:
    fs::path path_;
    std::ofstream os_;
};

int cmd_generate(const Options& o) {
    const auto cfg = load_config(o);
    require(o.set == "train" || o.set == "test", ErrorCode::invalid_argument, "--set must be 'train' or 'test'");
    const bool test = o.set == "test";
    const std::uint64_t seed = test ? derive_seed(cfg.seeds.generator, 0x74657374) : cfg.seeds.generator;
    const std::size_t per_cell = test ? cfg.generator.test_frames_per_cell : cfg.generator.frames_per_cell;
    SignalDataset ds = generate_corpus(per_cell, cfg.generator.snr_grid(), seed, cfg.generator.waveform);
    ds.meta.name = fs::path(o.out).stem().string();
    ensure_parent(o.out);
    write_canonical(fs::path(o.out), ds,
                    {{"config_hash", cfg.hash()}, {"seed", cfg.seeds.generator}, {"set", o.set}});
    log(Level::info, "wrote " + std::to_string(ds.size()) + " frames to " + o.out);
    return 0;
}

int cmd_pretrain(const Options& o) {
    const auto cfg = load_config(o);
    const SignalDataset corpus = load_canonical(o.corpus);
    LogFile lf(cfg, o.out);
    log(Level::info, "pre-training on " + std::to_string(corpus.size()) + " frames");
    const auto result = pretrain(corpus, cfg.pretrain_config(), lf.sink());
    ensure_parent(o.out);
    save_checkpoint(o.out, result.checkpoint);
    log(Level::info, "best epoch " + std::to_string(result.best_epoch) + ", checkpoint " + o.out);
    return 0;
}

SignalDataset draw_shots(const ExperimentConfig& cfg, const Options& o) {
    const SignalDataset pool = load_canonical(o.data);
    SignalDataset shots = sample_nshot(pool, {cfg.eval.n_shot, cfg.seeds.shots});
    const fs::path audit = fs::path(o.out).replace_extension(".shots.rfm");
    write_canonical(audit, shots, {{"config_hash", cfg.hash()}, {"seed", cfg.seeds.shots}, {"source", pool.meta.name}});
    log(Level::info, "sampled " + std::to_string(shots.size()) + " shots (" + audit.string() + ")");
    return shots;
}

int cmd_finetune(const Options& o) {
    const auto cfg = load_config(o);
    const Checkpoint pre = load_checkpoint(o.checkpoint);
    require(pre.kind == CheckpointKind::autoencoder, ErrorCode::invalid_argument,
            "finetune expects a pre-training checkpoint");
    ensure_parent(o.out);
    const SignalDataset shots = draw_shots(cfg, o);
    LogFile lf(cfg, o.out);
    const Checkpoint ck = finetune(pre, shots, cfg.finetune_config(), lf.sink());
    save_checkpoint(o.out, ck);
    log(Level::info, "wrote " + o.out);
    return 0;
}

int cmd_baseline(const Options& o) {
    const auto cfg = load_config(o);
    ensure_parent(o.out);
    const SignalDataset shots = draw_shots(cfg, o);
    LogFile lf(cfg, o.out);
    const Checkpoint ck = train_baseline(shots, cfg.finetune_config(), cfg.pretrain.arch, lf.sink());
    save_checkpoint(o.out, ck);
    log(Level::info, "wrote " + o.out);
    return 0;
}

int cmd_evaluate(const Options& o) {
    const auto cfg = load_config(o);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const SignalDataset test = load_canonical(o.data);
    MetricsReport r = evaluate(ck, test, cfg.eval.batch_size);
    if (!o.config.empty()) r.provenance["eval_config_hash"] = cfg.hash();
    const nlohmann::json j = r;
    write_text(o.out, j.dump(2) + "\n");
    log(Level::info, "accuracy " + std::to_string(r.accuracy) + ", macro F1 " + std::to_string(r.macro_f1));
    return 0;
}

int cmd_sweep(const Options& o) {
    const auto cfg = load_config(o);
    const SignalDataset corpus = load_canonical(o.corpus);
    const SignalDataset pool = load_canonical(o.data);
    const SignalDataset test = load_canonical(o.test);
    const SignalDataset shots = sample_nshot(pool, {cfg.eval.n_shot, cfg.seeds.shots});
    const std::size_t jobs = o.deterministic ? 1 : o.jobs;
    const auto result =
        sweep(corpus, shots, test, cfg.pretrain_config(), cfg.finetune_config(), cfg.sweep.plan(jobs));
    const fs::path dir = o.out;
    fs::create_directories(dir);
    write_text(dir / "heatmap.csv", heatmap_csv(result));
    nlohmann::json j = to_json(result);
    j["provenance"] = {{"config_hash", cfg.hash()}, {"seeds", cfg.sweep.seeds}};
    write_text(dir / "sweep.json", j.dump(2) + "\n");
    std::size_t failed = 0;
    for (const auto& c : result.cells) {
        if (c.error) {
            ++failed;
            log(Level::warn, *c.error);
        }
    }
    log(Level::info, std::to_string(result.cells.size() - failed) + "/" + std::to_string(result.cells.size()) +
                         " cells completed");
    return failed == result.cells.size() ? 2 : 0;
}

int cmd_embed(const Options& o) {
    const auto cfg = load_config(o);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const SignalDataset ds = load_canonical(o.data);
    const EmbeddingFile f = export_embeddings(ck, ds, cfg.eval.pca_dims);
    ensure_parent(o.out);
    std::ofstream os(o.out, std::ios::binary | std::ios::trunc);
    require(os.is_open(), ErrorCode::io, "cannot open '" + o.out + "' for writing");
    write_embeddings(os, f);
    log(Level::info, "wrote " + std::to_string(f.rows) + " x " + std::to_string(f.dim) + " embedding to " + o.out);
    return 0;
}

std::string read_text(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.is_open(), ErrorCode::invalid_argument, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int cmd_plot(const Options& o) {
    require(o.heatmap.empty() != o.metrics.empty(), ErrorCode::invalid_argument,
            "plot needs either --heatmap or one or more --metrics");
    std::string svg;
    if (!o.heatmap.empty()) {
        const auto cells = plot::parse_heatmap_csv(read_text(o.heatmap));
        svg = plot::heatmap_svg(cells, {{"source", o.heatmap}, {"cells", cells.size()}});
    } else {
        std::vector<plot::Series> series;
        auto prov = nlohmann::json::array();
        for (const auto& path : o.metrics) {
            const std::string text = read_text(path);
            require(!text.empty(), ErrorCode::invalid_argument, "metrics file '" + path + "' is empty");
            MetricsReport r;
            try {
                r = nlohmann::json::parse(text).get<MetricsReport>();
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorCode::invalid_argument, "malformed metrics file '" + path + "': " + e.what());
            }
            require(!r.per_snr_accuracy.empty(), ErrorCode::invalid_argument,
                    "metrics file '" + path + "' has no per-SNR accuracy");
            series.push_back(plot::series_from_report(r, fs::path(path).stem().string()));
            prov.push_back({{"source", path}, {"provenance", r.provenance}});
        }
        svg = plot::snr_chart_svg(series, prov);
    }
    write_text(o.out, svg);
    log(Level::info, "wrote " + o.out);
    return 0;
}

int cmd_inspect(const Options& o) {
    const std::string bytes = read_text(o.input);
    const std::span<const unsigned char> span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    if (bytes.rfind(kCheckpointMagic, 0) == 0) {
        const Checkpoint ck = parse_checkpoint(span);
        nlohmann::json arch = ck.params.arch;
        std::cout << "checkpoint: " << to_string(ck.kind) << "\n"
                  << "architecture: " << arch.dump() << "\n"
                  << "parameters: " << ck.params.parameter_count() << " in " << ck.params.arrays.size()
                  << " arrays\n"
                  << "epoch: " << ck.provenance.value("epoch", std::size_t{0}) << "\n";
        if (ck.provenance.contains("val_loss")) std::cout << "val_loss: " << ck.provenance["val_loss"] << "\n";
        if (ck.kind == CheckpointKind::classifier) {
            std::cout << "frame_len: " << ck.frame_len << "\nn_cls: " << ck.n_cls << "\n";
        }
        std::cout << "config_hash: " << ck.provenance.value("config_hash", std::string{}) << "\n"
                  << "seed: " << ck.provenance.value("seed", std::uint64_t{0}) << "\n"
                  << "id: " << checkpoint_id(ck) << "\n";
    } else if (bytes.rfind(kCanonicalMagic, 0) == 0) {
        const SignalDataset ds = parse_canonical(span, fs::path(o.input).stem().string());
        std::cout << "dataset: " << ds.meta.name << "\nframes: " << ds.size() << "\nframe_len: " << ds.meta.frame_len
                  << "\nn_cls: " << ds.meta.n_cls << "\nt_res_us: " << ds.meta.t_res_us
                  << "\nsnr levels: " << ds.meta.snr_grid.size() << "\nlabeled: " << (ds.has_labels() ? "yes" : "no")
                  << "\n";
    } else {
        const EmbeddingFile f = parse_embeddings(span);
        double total = 0.0;
        for (double v : f.explained_ratio) total += v;
        std::cout << "embedding: " << f.rows << " rows x " << f.dim << " dims\nexplained variance: " << total << "\n";
    }
    return 0;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::numerical_failure:
    case ErrorCode::io: return 2;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked signal modelling for few-shot radar signal recognition"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment config (JSON)");
        sub->add_option("--seed-override", o.seed_override, "Replace every seed in the config");
        sub->add_flag("--deterministic", o.deterministic, "Single-threaded numeric paths");
        sub->add_option("--jobs", o.jobs, "Worker threads for independent runs")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("generate", "Synthesize a labeled radar corpus");
    common(gen);
    gen->add_option("--out", o.out, "Output dataset")->required();
    gen->add_option("--set", o.set, "train (frames_per_cell) or test (test_frames_per_cell)");

    auto* pre = app.add_subcommand("pretrain", "Masked-reconstruction pre-training");
    common(pre);
    pre->add_option("--corpus", o.corpus, "Pre-training dataset")->required()->check(CLI::ExistingFile);
    pre->add_option("--out", o.out, "Output checkpoint")->required();

    auto* fin = app.add_subcommand("finetune", "n-shot fine-tuning of a pre-trained encoder");
    common(fin);
    fin->add_option("--checkpoint", o.checkpoint, "Pre-training checkpoint")->required()->check(CLI::ExistingFile);
    fin->add_option("--data", o.data, "Labeled pool to draw shots from")->required()->check(CLI::ExistingFile);
    fin->add_option("--out", o.out, "Output classifier checkpoint")->required();

    auto* base = app.add_subcommand("baseline", "n-shot training from random initialization");
    common(base);
    base->add_option("--data", o.data, "Labeled pool to draw shots from")->required()->check(CLI::ExistingFile);
    base->add_option("--out", o.out, "Output classifier checkpoint")->required();

    auto* ev = app.add_subcommand("evaluate", "Metrics of a classifier on a labeled dataset");
    common(ev);
    ev->add_option("--checkpoint", o.checkpoint, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", o.data, "Labeled test dataset")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", o.out, "Output metrics JSON")->required();

    auto* sw = app.add_subcommand("sweep", "Masking strategy x ratio sweep");
    common(sw);
    sw->add_option("--corpus", o.corpus, "Pre-training dataset")->required()->check(CLI::ExistingFile);
    sw->add_option("--data", o.data, "Labeled pool to draw shots from")->required()->check(CLI::ExistingFile);
    sw->add_option("--test", o.test, "Labeled test dataset")->required()->check(CLI::ExistingFile);
    sw->add_option("--out", o.out, "Output directory")->required();

    auto* em = app.add_subcommand("embed", "PCA-reduced encoder embeddings");
    common(em);
    em->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
    em->add_option("--data", o.data, "Dataset to embed")->required()->check(CLI::ExistingFile);
    em->add_option("--out", o.out, "Output embedding file")->required();

    auto* pl = app.add_subcommand("plot", "SVG heatmap or accuracy-vs-SNR chart");
    pl->add_option("--heatmap", o.heatmap, "Sweep heatmap CSV");
    pl->add_option("--metrics", o.metrics, "Metrics JSON (repeat for several curves)");
    pl->add_option("--out", o.out, "Output SVG")->required();

    auto* in = app.add_subcommand("inspect", "Summarize a checkpoint, dataset or embedding file");
    in->add_option("file", o.input, "File to inspect")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_generate(o);
        if (*pre) return cmd_pretrain(o);
        if (*fin) return cmd_finetune(o);
        if (*base) return cmd_baseline(o);
        if (*ev) return cmd_evaluate(o);
        if (*sw) return cmd_sweep(o);
        if (*em) return cmd_embed(o);
        if (*pl) return cmd_plot(o);
        if (*in) return cmd_inspect(o);
    } catch (const Error& e) {
        log(Level::error, std::string(to_string(e.code())) + ": " + e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        log(Level::error, e.what());
        return 2;
    }
    return 1;
}
