#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfmsm/checkpoint.hpp"
#include "rfmsm/fewshot.hpp"
#include "rfmsm/hash.hpp"
#include "rfmsm/iqcore.hpp"
#include "rfmsm/losses.hpp"
#include "rfmsm/masking.hpp"
#include "rfmsm/models.hpp"
#include "rfmsm/optim.hpp"

namespace rfmsm {

// Stream tags for derive_seed; each random decision in training draws from
// its own stream so changing one never shifts another.
namespace stream {
inline constexpr std::uint64_t init = 0x696e6974;
inline constexpr std::uint64_t shuffle = 0x73687566;
inline constexpr std::uint64_t mask = 0x6d61736b;
inline constexpr std::uint64_t val_mask = 0x766d736b;
inline constexpr std::uint64_t probe = 0x70726f62;
} // namespace stream

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& section) {
    require(j.is_object(), ErrorCode::config, "'" + section + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok |= key == k;
        require(ok, ErrorCode::config, "unknown key '" + key + "' in '" + section + "'");
    }
}

template <class V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::config, "'" + section + "." + key + "' has the wrong type");
    }
}

} // namespace detail

struct PretrainConfig {
    MaskStrategy strategy = MaskStrategy::A;
    double mask_ratio = 0.7;
    ReconstructionLoss loss = ReconstructionLoss::l1;
    double lr = 1e-3;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    ArchitectureDescriptor arch;
    bool masked_only_loss = false;
    std::string config_hash;  // stamped into the checkpoint; derived from this config when empty

    MaskSpec mask_spec() const { return {strategy, mask_ratio, 0}; }

    void validate() const {
        require(lr > 0.0 && std::isfinite(lr), ErrorCode::config, "pretrain lr must be > 0");
        require(batch_size >= 1, ErrorCode::config, "pretrain batch_size must be >= 1");
        require(patience >= 1, ErrorCode::config, "early_stop_patience must be >= 1");
        require(max_epochs >= 1, ErrorCode::config, "max_epochs must be >= 1");
        mask_spec().validate();
        arch.validate();
    }
};

inline void to_json(nlohmann::json& j, const PretrainConfig& c) {
    j = {{"mask_strategy", std::string(1, strategy_char(c.strategy))},
         {"mask_ratio", c.mask_ratio},
         {"loss", to_string(c.loss)},
         {"lr", c.lr},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"early_stop_patience", c.patience},
         {"architecture", c.arch},
         {"masked_only_loss", c.masked_only_loss}};
}

inline void from_json(const nlohmann::json& j, PretrainConfig& c) {
    const std::string sec = "pretrain";
    detail::reject_unknown_keys(j, {"mask_strategy", "mask_ratio", "loss", "lr", "batch_size", "max_epochs",
                                    "early_stop_patience", "architecture", "masked_only_loss"},
                                sec);
    std::string strategy(1, strategy_char(c.strategy)), loss = to_string(c.loss);
    detail::read_key(j, "mask_strategy", strategy, sec);
    detail::read_key(j, "loss", loss, sec);
    c.strategy = parse_strategy(strategy);
    c.loss = parse_reconstruction_loss(loss);
    detail::read_key(j, "mask_ratio", c.mask_ratio, sec);
    detail::read_key(j, "lr", c.lr, sec);
    detail::read_key(j, "batch_size", c.batch_size, sec);
    detail::read_key(j, "max_epochs", c.max_epochs, sec);
    detail::read_key(j, "early_stop_patience", c.patience, sec);
    detail::read_key(j, "masked_only_loss", c.masked_only_loss, sec);
    if (j.contains("architecture")) c.arch = j.at("architecture").get<ArchitectureDescriptor>();
}

struct FinetuneConfig {
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::size_t epochs = 100;
    std::size_t freeze_encoder_epochs = 10;
    std::uint64_t seed = 0;
    std::string config_hash;

    void validate() const {
        require(lr > 0.0 && std::isfinite(lr), ErrorCode::config, "finetune lr must be > 0");
        require(batch_size >= 1, ErrorCode::config, "finetune batch_size must be >= 1");
        require(epochs >= 1, ErrorCode::config, "finetune epochs must be >= 1");
        require(freeze_encoder_epochs <= epochs, ErrorCode::config, "freeze_encoder_epochs must not exceed epochs");
    }
};

inline void to_json(nlohmann::json& j, const FinetuneConfig& c) {
    j = {{"lr", c.lr},
         {"batch_size", c.batch_size},
         {"epochs", c.epochs},
         {"freeze_encoder_epochs", c.freeze_encoder_epochs}};
}

inline void from_json(const nlohmann::json& j, FinetuneConfig& c) {
    const std::string sec = "finetune";
    detail::reject_unknown_keys(j, {"lr", "batch_size", "epochs", "freeze_encoder_epochs"}, sec);
    detail::read_key(j, "lr", c.lr, sec);
    detail::read_key(j, "batch_size", c.batch_size, sec);
    detail::read_key(j, "epochs", c.epochs, sec);
    detail::read_key(j, "freeze_encoder_epochs", c.freeze_encoder_epochs, sec);
}

/// Receives one JSON record per epoch and split.
using TrainLog = std::function<void(const nlohmann::json&)>;

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void emit_log(const TrainLog& log, std::size_t epoch, const char* split, double loss,
                     std::optional<double> accuracy, double lr) {
    if (!log) return;
    nlohmann::json rec{{"epoch", epoch}, {"split", split}, {"loss", loss}, {"lr", lr}, {"timestamp", utc_timestamp()}};
    if (accuracy) rec["accuracy"] = *accuracy;
    log(rec);
}

/// Standardizes every frame and packs the dataset as a [N][2][L] float tensor.
inline Tensor<float> to_tensor(const SignalDataset& ds, const StandardizationStats& stats) {
    stats.validate();
    const std::size_t len = ds.meta.frame_len;
    Tensor<float> out(ds.size(), 2, len);
    const double si = std::sqrt(stats.var_i), sq = std::sqrt(stats.var_q);
    for (std::size_t b = 0; b < ds.size(); ++b) {
        const auto& f = ds.frames[b];
        require(f.length() == len, ErrorCode::shape_mismatch, "frame length differs from dataset frame_len");
        float* ri = out.row(b, 0);
        float* rq = out.row(b, 1);
        for (std::size_t n = 0; n < len; ++n) {
            ri[n] = static_cast<float>((f.i[n] - stats.mean_i) / si);
            rq[n] = static_cast<float>((f.q[n] - stats.mean_q) / sq);
        }
    }
    return out;
}

/// Copies the listed frames of `all` into a new batch tensor.
inline Tensor<float> gather(const Tensor<float>& all, std::span<const std::size_t> positions) {
    Tensor<float> out(positions.size(), all.channels, all.length);
    const std::size_t fs = all.frame_size();
    for (std::size_t b = 0; b < positions.size(); ++b) {
        std::copy_n(all.frame(positions[b]), fs, out.frame(b));
    }
    return out;
}

/// Pooled mean/variance over both channels of a (standardized) tensor.
inline NoiseModel noise_model_from(const Tensor<float>& data) {
    require(data.size() > 0, ErrorCode::empty_corpus, "empty corpus");
    double sum = 0.0;
    for (float v : data.data) sum += v;
    const double mean = sum / static_cast<double>(data.size());
    double ss = 0.0;
    for (float v : data.data) ss += (v - mean) * (v - mean);
    return {mean, ss / static_cast<double>(data.size())};
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, stream::shuffle, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

/// Masks the frames of `batch` in place. Frame k's mask comes from the
/// stream (root, id[k]), so it depends only on the epoch key and frame id.
inline std::vector<std::vector<bool>> mask_batch(Tensor<float>& batch, std::span<const std::uint64_t> ids,
                                                 const MaskSpec& spec, const NoiseModel& noise, std::uint64_t root) {
    std::vector<std::vector<bool>> masks(batch.batch);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        Rng rng(derive_seed(root, ids[b]));
        masks[b] = draw_mask(batch.length, spec.strategy, spec.ratio, rng);
        corrupt_channels(std::span<float>(batch.row(b, 0), batch.length),
                         std::span<float>(batch.row(b, 1), batch.length), masks[b], spec.strategy, noise, rng);
    }
    return masks;
}

struct PretrainResult {
    Checkpoint checkpoint;  // parameters of the best validation epoch
    std::vector<double> train_losses;
    std::vector<double> val_losses;
    std::size_t best_epoch = 0;
    double test_loss = 0.0;
};

namespace detail {

struct MaskedEvalSet {
    Tensor<float> clean;
    Tensor<float> masked;
    std::vector<std::vector<bool>> masks;
};

inline MaskedEvalSet fixed_masked_set(const Tensor<float>& clean, const std::vector<std::uint64_t>& ids,
                                      const MaskSpec& spec, const NoiseModel& noise, std::uint64_t root) {
    MaskedEvalSet s{clean, clean, {}};
    s.masks = mask_batch(s.masked, ids, spec, noise, root);
    return s;
}

/// Mean reconstruction loss over a whole set, batch by batch.
inline double reconstruction_eval(Autoencoder<float>& model, const MaskedEvalSet& set, const PretrainConfig& cfg) {
    double total = 0.0, weight = 0.0;
    std::vector<std::size_t> pos;
    for (std::size_t lo = 0; lo < set.clean.batch; lo += cfg.batch_size) {
        const std::size_t hi = std::min(set.clean.batch, lo + cfg.batch_size);
        pos.resize(hi - lo);
        std::iota(pos.begin(), pos.end(), lo);
        Tensor<float> recon = model.forward(gather(set.masked, pos));
        Tensor<float> target = gather(set.clean, pos);
        std::vector<std::vector<bool>> masks(set.masks.begin() + static_cast<std::ptrdiff_t>(lo),
                                             set.masks.begin() + static_cast<std::ptrdiff_t>(hi));
        const auto loss = reconstruction_loss(recon, target, cfg.loss, cfg.masked_only_loss ? &masks : nullptr);
        double w = static_cast<double>(recon.size());
        if (cfg.masked_only_loss) {
            w = 0.0;
            for (const auto& m : masks) w += 2.0 * static_cast<double>(std::count(m.begin(), m.end(), true));
        }
        total += loss.value * w;
        weight += w;
    }
    return weight > 0.0 ? total / weight : 0.0;
}

inline std::vector<std::uint64_t> ids_of(const SignalDataset& ds) {
    if (!ds.ids.empty()) return ds.ids;
    std::vector<std::uint64_t> ids(ds.size());
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    return ids;
}

inline nlohmann::json dataset_provenance(const SignalDataset& ds) {
    return {{"name", ds.meta.name},
            {"frame_len", ds.meta.frame_len},
            {"t_res_us", ds.meta.t_res_us},
            {"n_cls", ds.meta.n_cls},
            {"num_frames", ds.size()}};
}

} // namespace detail

/// Self-supervised masked-reconstruction pre-training with early stopping.
/// The corpus is split 70/20/10; statistics come from the training part.
inline PretrainResult pretrain(const SignalDataset& corpus, const PretrainConfig& cfg, const TrainLog& log = {}) {
    cfg.validate();
    require(corpus.size() >= cfg.batch_size, ErrorCode::too_small,
            "corpus of " + std::to_string(corpus.size()) + " frames is smaller than one batch (" +
                std::to_string(cfg.batch_size) + ")");
    cfg.arch.require_length(corpus.meta.frame_len);
    const DatasetSplit split = split_70_20_10(corpus, cfg.seed);
    const StandardizationStats stats = compute_stats(split.train);
    const Tensor<float> train = to_tensor(split.train, stats);
    const NoiseModel noise = noise_model_from(train);
    const MaskSpec spec = cfg.mask_spec();
    validate_mask_inputs(spec, noise);

    const auto train_ids = detail::ids_of(split.train);
    const std::uint64_t mask_root = derive_seed(cfg.seed, stream::mask);
    const auto val_set = detail::fixed_masked_set(to_tensor(split.val, stats), detail::ids_of(split.val), spec, noise,
                                                  derive_seed(cfg.seed, stream::val_mask));

    Autoencoder<float> model(cfg.arch);
    model.init(derive_seed(cfg.seed, stream::init));
    Adam<float> adam(model.parameters());
    EarlyStopper stopper(cfg.patience);

    PretrainResult result;
    ModelParams best_params = model.export_params();
    AdamState<float> best_opt = adam.state();
    std::vector<std::uint64_t> batch_ids;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto order = epoch_order(train.batch, cfg.seed, epoch);
        const std::uint64_t epoch_root = derive_seed(mask_root, epoch);
        double total = 0.0, weight = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++batch_index) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            std::span<const std::size_t> pos(order.data() + lo, hi - lo);
            Tensor<float> target = gather(train, pos);
            Tensor<float> input = target;
            batch_ids.resize(pos.size());
            for (std::size_t k = 0; k < pos.size(); ++k) batch_ids[k] = train_ids[pos[k]];
            auto masks = mask_batch(input, batch_ids, spec, noise, epoch_root);

            model.zero_grad();
            Tensor<float> recon = model.forward(std::move(input));
            auto loss = reconstruction_loss(recon, target, cfg.loss, cfg.masked_only_loss ? &masks : nullptr);
            if (!std::isfinite(loss.value)) {
                fail(ErrorCode::numerical_failure, "non-finite pre-training loss at epoch " + std::to_string(epoch) +
                                                       ", batch " + std::to_string(batch_index) +
                                                       "; try a lower learning rate");
            }
            model.backward(std::move(loss.grad));
            adam.step(cfg.lr);
            total += loss.value * static_cast<double>(pos.size());
            weight += static_cast<double>(pos.size());
        }
        const double train_loss = total / weight;
        const double val_loss = detail::reconstruction_eval(model, val_set, cfg);
        if (!std::isfinite(val_loss)) {
            fail(ErrorCode::numerical_failure, "non-finite validation loss at epoch " + std::to_string(epoch));
        }
        result.train_losses.push_back(train_loss);
        result.val_losses.push_back(val_loss);
        emit_log(log, epoch, "train", train_loss, std::nullopt, cfg.lr);
        emit_log(log, epoch, "val", val_loss, std::nullopt, cfg.lr);
        if (stopper.observe(val_loss)) {
            best_params = model.export_params();
            best_opt = adam.state();
        }
        if (stopper.should_stop()) break;
    }
    result.best_epoch = stopper.best_epoch();

    model.load(best_params);
    if (split.test.size() > 0) {
        const auto test_set = detail::fixed_masked_set(to_tensor(split.test, stats), detail::ids_of(split.test), spec,
                                                       noise, derive_seed(cfg.seed, stream::val_mask, 1));
        result.test_loss = detail::reconstruction_eval(model, test_set, cfg);
    }

    nlohmann::json cfg_json = cfg;
    cfg_json["seed"] = cfg.seed;
    Checkpoint& ck = result.checkpoint;
    ck.kind = CheckpointKind::autoencoder;
    ck.params = std::move(best_params);
    ck.optimizer = std::move(best_opt);
    ck.stats = stats;
    ck.provenance = {{"stage", "pretrain"},
                     {"config", cfg_json},
                     {"config_hash", cfg.config_hash.empty() ? json_hash(cfg_json) : cfg.config_hash},
                     {"seed", cfg.seed},
                     {"epoch", result.best_epoch},
                     {"epochs_run", result.val_losses.size()},
                     {"val_loss", stopper.best_loss()},
                     {"train_loss", result.train_losses.at(result.best_epoch - 1)},
                     {"test_loss", result.test_loss},
                     {"noise_model", {{"mean", noise.mean}, {"variance", noise.variance}}},
                     {"split", {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}}},
                     {"shuffle", "per-epoch Fisher-Yates, stream (seed, shuffle, epoch)"},
                     {"dataset", detail::dataset_provenance(corpus)}};
    return result;
}

/// Argmax with ties going to the lower class index.
inline int argmax_row(const float* z, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
        if (z[k] > z[best]) best = k;
    }
    return static_cast<int>(best);
}

namespace detail {

inline std::vector<int> class_labels(const SignalDataset& ds) {
    std::vector<int> out(ds.size());
    for (std::size_t k = 0; k < ds.size(); ++k) out[k] = ds.labels[k].class_id;
    return out;
}

/// Shared supervised loop for fine-tuning and the from-scratch baseline.
inline Checkpoint fit_classifier(Classifier<float>& clf, const SignalDataset& shots, const FinetuneConfig& cfg,
                                 std::size_t freeze_epochs, nlohmann::json provenance, const TrainLog& log) {
    const StandardizationStats stats = compute_stats(shots);
    const Tensor<float> data = to_tensor(shots, stats);
    const std::vector<int> labels = class_labels(shots);
    const std::size_t n_cls = clf.probe.n_cls();

    Adam<float> adam(clf.parameters());
    double last_loss = 0.0, last_acc = 0.0;
    std::vector<int> batch_labels;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        clf.encoder.set_frozen(epoch <= freeze_epochs);
        const auto order = epoch_order(data.batch, cfg.seed, epoch);
        double total = 0.0;
        std::size_t correct = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            std::span<const std::size_t> pos(order.data() + lo, hi - lo);
            batch_labels.resize(pos.size());
            for (std::size_t k = 0; k < pos.size(); ++k) batch_labels[k] = labels[pos[k]];

            clf.zero_grad();
            Tensor<float> logits = clf.forward(gather(data, pos));
            auto loss = cross_entropy(logits, batch_labels);
            if (!std::isfinite(loss.value)) {
                fail(ErrorCode::numerical_failure, "non-finite classification loss at epoch " + std::to_string(epoch));
            }
            for (std::size_t k = 0; k < pos.size(); ++k) {
                correct += argmax_row(logits.frame(k), n_cls) == batch_labels[k];
            }
            clf.backward(std::move(loss.grad));
            adam.step(cfg.lr);
            total += loss.value * static_cast<double>(pos.size());
        }
        last_loss = total / static_cast<double>(data.batch);
        last_acc = static_cast<double>(correct) / static_cast<double>(data.batch);
        emit_log(log, epoch, "train", last_loss, last_acc, cfg.lr);
    }
    clf.encoder.set_frozen(false);

    nlohmann::json cfg_json = cfg;
    cfg_json["seed"] = cfg.seed;
    provenance["config"] = cfg_json;
    provenance["config_hash"] = cfg.config_hash.empty() ? json_hash(cfg_json) : cfg.config_hash;
    provenance["seed"] = cfg.seed;
    provenance["epoch"] = cfg.epochs;
    provenance["train_loss"] = last_loss;
    provenance["train_accuracy"] = last_acc;
    provenance["freeze_encoder_epochs"] = freeze_epochs;
    provenance["shots"] = dataset_provenance(shots);

    Checkpoint ck;
    ck.kind = CheckpointKind::classifier;
    ck.params = clf.export_params();
    ck.optimizer = adam.state();
    ck.stats = stats;
    ck.frame_len = shots.meta.frame_len;
    ck.n_cls = n_cls;
    ck.provenance = std::move(provenance);
    return ck;
}

inline void require_shots(const SignalDataset& shots) {
    require(shots.has_labels(), ErrorCode::invalid_argument, "fine-tuning needs labeled frames");
    require(!shots.empty(), ErrorCode::empty_corpus, "empty shot set");
    require(shots.meta.n_cls >= 1, ErrorCode::invalid_argument, "shot set declares no classes");
    shots.validate();
}

} // namespace detail

/// Fine-tunes a pre-trained encoder with a fresh linear probe on labeled
/// shots. No masking; inputs use the shots' own statistics; the encoder is
/// frozen for the first `freeze_encoder_epochs` epochs.
inline Checkpoint finetune(const Checkpoint& pretrained, const SignalDataset& shots, const FinetuneConfig& cfg,
                           const TrainLog& log = {}) {
    cfg.validate();
    detail::require_shots(shots);
    DomainPair pair{source_domain(pretrained), DomainDescriptor::of(shots)};
    const FinetuneBundle bundle = prepare_domain_pair(pair, pretrained);

    Classifier<float> clf(bundle.arch, bundle.frame_len, bundle.n_cls);
    clf.encoder.load_from(bundle.encoder);
    clf.probe.init(derive_seed(cfg.seed, stream::probe));

    nlohmann::json prov = bundle.provenance();
    prov["stage"] = "finetune";
    prov["pretrained"] = true;
    prov["source_checkpoint"] = checkpoint_id(pretrained);
    prov["source_config_hash"] = pretrained.provenance.value("config_hash", std::string{});
    return detail::fit_classifier(clf, shots, cfg, cfg.freeze_encoder_epochs, std::move(prov), log);
}

/// Same model and loop as `finetune`, but the encoder starts from random
/// weights and is never frozen.
inline Checkpoint train_baseline(const SignalDataset& shots, const FinetuneConfig& cfg,
                                 const ArchitectureDescriptor& arch, const TrainLog& log = {}) {
    cfg.validate();
    arch.validate();
    detail::require_shots(shots);
    arch.require_length(shots.meta.frame_len);

    Classifier<float> clf(arch, shots.meta.frame_len, static_cast<std::size_t>(shots.meta.n_cls));
    clf.encoder.init(derive_seed(cfg.seed, stream::init));
    clf.probe.init(derive_seed(cfg.seed, stream::probe));

    nlohmann::json prov{{"stage", "baseline"}, {"pretrained", false}, {"target", to_json(DomainDescriptor::of(shots))}};
    return detail::fit_classifier(clf, shots, cfg, 0, std::move(prov), log);
}

} // namespace rfmsm
