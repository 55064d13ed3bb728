#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfmsm/hash.hpp"
#include "rfmsm/nn.hpp"
#include "rfmsm/rng.hpp"

namespace rfmsm {

enum class ArchKind { resnet1d, dilated };

inline std::string to_string(ArchKind k) { return k == ArchKind::resnet1d ? "resnet1d" : "dilated"; }

inline ArchKind parse_arch_kind(const std::string& s) {
    if (s == "resnet1d") return ArchKind::resnet1d;
    if (s == "dilated") return ArchKind::dilated;
    fail(ErrorCode::invalid_argument, "unknown architecture kind '" + s + "' (expected resnet1d or dilated)");
}

/// Shape of an autoencoder. ResNet1D-style uses the stem/stage fields;
/// the dilated (WaveNet-style) model uses the dilated_* fields.
struct ArchitectureDescriptor {
    ArchKind kind = ArchKind::resnet1d;
    std::size_t in_channels = 2;
    // resnet1d
    std::size_t stem_channels = 32;
    std::size_t stem_kernel = 7;
    std::vector<std::size_t> stage_channels{32, 64, 128};
    std::size_t blocks_per_stage = 2;
    std::size_t kernel = 3;
    // dilated
    std::size_t dilated_channels = 32;
    std::size_t dilated_kernel = 2;
    std::vector<std::size_t> dilations{1, 2, 4, 8, 16, 32, 64, 128};
    // average pooling before the probe's flatten
    std::size_t probe_pool = 1;

    static ArchitectureDescriptor resnet1d_default() { return {}; }

    static ArchitectureDescriptor dilated_default() {
        ArchitectureDescriptor d;
        d.kind = ArchKind::dilated;
        d.probe_pool = 8;
        return d;
    }

    std::size_t total_downsample() const {
        return kind == ArchKind::resnet1d ? (std::size_t{1} << stage_channels.size()) : 1;
    }

    std::size_t embedding_channels() const {
        return kind == ArchKind::resnet1d ? stage_channels.back() : dilated_channels;
    }

    /// Input length must be a multiple of this for encode + probe to work.
    std::size_t length_divisor() const { return total_downsample() * probe_pool; }

    std::size_t embedding_length(std::size_t length) const { return length / total_downsample(); }

    std::size_t flatten_dim(std::size_t length) const {
        return embedding_channels() * (embedding_length(length) / probe_pool);
    }

    void validate() const {
        require(in_channels >= 1, ErrorCode::invalid_argument, "in_channels must be >= 1");
        require(probe_pool >= 1, ErrorCode::invalid_argument, "probe_pool must be >= 1");
        if (kind == ArchKind::resnet1d) {
            require(!stage_channels.empty() && stage_channels.size() <= 10, ErrorCode::invalid_argument,
                    "resnet1d needs 1..10 stages");
            require(stem_channels >= 1 && blocks_per_stage >= 1, ErrorCode::invalid_argument,
                    "resnet1d needs positive widths and at least one block per stage");
            require(stem_kernel % 2 == 1 && kernel % 2 == 1, ErrorCode::invalid_argument,
                    "resnet1d kernels must be odd");
            for (auto c : stage_channels) require(c >= 1, ErrorCode::invalid_argument, "stage width must be >= 1");
        } else {
            require(dilated_channels >= 1 && dilated_kernel >= 1 && !dilations.empty(), ErrorCode::invalid_argument,
                    "dilated model needs channels, kernel and at least one dilation");
            for (auto d : dilations) require(d >= 1, ErrorCode::invalid_argument, "dilation must be >= 1");
        }
    }

    void require_length(std::size_t length) const {
        const std::size_t div = length_divisor();
        require(length >= div && length % div == 0, ErrorCode::indivisible_length,
                "frame length " + std::to_string(length) + " is not divisible by " + std::to_string(div) +
                    " (required by encoder downsampling x probe pooling); pad or crop the frames");
    }

    friend bool operator==(const ArchitectureDescriptor&, const ArchitectureDescriptor&) = default;
};

inline void to_json(nlohmann::json& j, const ArchitectureDescriptor& d) {
    j = nlohmann::json{{"kind", to_string(d.kind)}, {"in_channels", d.in_channels}, {"probe_pool", d.probe_pool}};
    if (d.kind == ArchKind::resnet1d) {
        j["stem_channels"] = d.stem_channels;
        j["stem_kernel"] = d.stem_kernel;
        j["stage_channels"] = d.stage_channels;
        j["blocks_per_stage"] = d.blocks_per_stage;
        j["kernel"] = d.kernel;
    } else {
        j["dilated_channels"] = d.dilated_channels;
        j["dilated_kernel"] = d.dilated_kernel;
        j["dilations"] = d.dilations;
    }
}

/// Missing keys take the kind's defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ArchitectureDescriptor& d) {
    require(j.is_object(), ErrorCode::config, "architecture must be an object");
    const ArchKind kind = parse_arch_kind(j.value("kind", std::string("resnet1d")));
    d = kind == ArchKind::resnet1d ? ArchitectureDescriptor::resnet1d_default()
                                   : ArchitectureDescriptor::dilated_default();
    static const std::vector<std::string> known{"kind",          "in_channels",    "probe_pool", "stem_channels",
                                                "stem_kernel",   "stage_channels", "blocks_per_stage",
                                                "kernel",        "dilated_channels", "dilated_kernel",
                                                "dilations"};
    for (const auto& [key, value] : j.items()) {
        require(std::find(known.begin(), known.end(), key) != known.end(), ErrorCode::config,
                "unknown architecture key '" + key + "'");
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("in_channels", d.in_channels);
    get("probe_pool", d.probe_pool);
    get("stem_channels", d.stem_channels);
    get("stem_kernel", d.stem_kernel);
    get("stage_channels", d.stage_channels);
    get("blocks_per_stage", d.blocks_per_stage);
    get("kernel", d.kernel);
    get("dilated_channels", d.dilated_channels);
    get("dilated_kernel", d.dilated_kernel);
    get("dilations", d.dilations);
    d.validate();
}

struct NamedArray {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> values;

    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

/// Ordered named parameter arrays plus the architecture they belong to.
struct ModelParams {
    ArchitectureDescriptor arch;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const {
        for (const auto& a : arrays) {
            if (a.name == name) return &a;
        }
        return nullptr;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& a : arrays) n += a.values.size();
        return n;
    }

    /// Arrays whose name starts with `prefix`, in order.
    ModelParams select(const std::string& prefix) const {
        ModelParams out{arch, {}};
        for (const auto& a : arrays) {
            if (a.name.rfind(prefix, 0) == 0) out.arrays.push_back(a);
        }
        return out;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Weights U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero. The stream for
/// each tensor derives from (seed, name), independent of construction order.
template <class T>
void init_tensor(ParamTensor<T>& p, std::uint64_t seed) {
    if (p.is_bias) {
        std::fill(p.value.begin(), p.value.end(), T(0));
        return;
    }
    const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
    Rng rng(derive_seed(seed, fnv1a64(p.name)));
    for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
}

/// A set of modules whose parameters export to / import from ModelParams.
template <class T>
class ParamOwner {
public:
    virtual ~ParamOwner() = default;

    std::vector<ParamTensor<T>*> parameters() {
        std::vector<ParamTensor<T>*> out;
        collect(out);
        return out;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    void set_frozen(bool frozen) {
        for (auto* p : parameters()) p->frozen = frozen;
    }

    void init(std::uint64_t seed) {
        for (auto* p : parameters()) init_tensor(*p, seed);
    }

    void export_to(std::vector<NamedArray>& out) {
        for (auto* p : parameters()) {
            out.push_back({p->name, p->shape, std::vector<float>(p->value.begin(), p->value.end())});
        }
    }

    /// Loads every owned tensor by name; shapes must match exactly.
    void load_from(const ModelParams& params) {
        for (auto* p : parameters()) {
            const NamedArray* a = params.find(p->name);
            require(a != nullptr, ErrorCode::shape_mismatch, "parameter '" + p->name + "' missing from checkpoint");
            require(a->shape == p->shape, ErrorCode::shape_mismatch, "parameter '" + p->name + "' has wrong shape");
            p->value.assign(a->values.begin(), a->values.end());
        }
    }

protected:
    virtual void collect(std::vector<ParamTensor<T>*>& out) = 0;
};

template <class T>
class Encoder final : public ParamOwner<T> {
public:
    explicit Encoder(const ArchitectureDescriptor& arch) : arch_(arch) {
        arch.validate();
        if (arch.kind == ArchKind::resnet1d) {
            net_.add(nn::Conv1d<T>::same("encoder.stem", arch.in_channels, arch.stem_channels, arch.stem_kernel));
            net_.add(std::make_unique<nn::ReLU<T>>());
            std::size_t ch = arch.stem_channels;
            for (std::size_t s = 0; s < arch.stage_channels.size(); ++s) {
                for (std::size_t b = 0; b < arch.blocks_per_stage; ++b) {
                    const std::string name = "encoder.stage" + std::to_string(s) + ".block" + std::to_string(b);
                    net_.add(std::make_unique<nn::ResidualBlock<T>>(name, ch, arch.stage_channels[s], arch.kernel,
                                                                    b == 0 ? 2 : 1));
                    ch = arch.stage_channels[s];
                }
            }
        } else {
            net_.add(std::make_unique<nn::Conv1d<T>>("encoder.input", arch.in_channels, arch.dilated_channels, 1, 1,
                                                     1, 0, 0));
            for (std::size_t b = 0; b < arch.dilations.size(); ++b) {
                net_.add(std::make_unique<nn::GatedResidualBlock<T>>("encoder.block" + std::to_string(b),
                                                                     arch.dilated_channels, arch.dilated_kernel,
                                                                     arch.dilations[b]));
            }
        }
    }

    /// [B][in_channels][L] -> [B][C_e][L / total_downsample].
    Tensor<T> forward(Tensor<T> x) {
        if (x.channels != arch_.in_channels) {
            fail(ErrorCode::shape_mismatch, "encoder expects " + std::to_string(arch_.in_channels) + " input channels");
        }
        const std::size_t div = arch_.total_downsample();
        if (x.length < div || x.length % div != 0) {
            fail(ErrorCode::indivisible_length,
                 "frame length " + std::to_string(x.length) + " must be divisible by " + std::to_string(div));
        }
        return net_.forward(std::move(x));
    }

    Tensor<T> backward(Tensor<T> grad) { return net_.backward(std::move(grad)); }

    const ArchitectureDescriptor& arch() const { return arch_; }

protected:
    void collect(std::vector<ParamTensor<T>*>& out) override { net_.collect(out); }

private:
    ArchitectureDescriptor arch_;
    nn::Sequential<T> net_;
};

/// Mirrors the encoder: per stage nearest x2 upsample then two convs;
/// the dilated model uses a 1x1 head.
template <class T>
class Decoder final : public ParamOwner<T> {
public:
    explicit Decoder(const ArchitectureDescriptor& arch) : arch_(arch) {
        arch.validate();
        if (arch.kind == ArchKind::resnet1d) {
            const auto& st = arch.stage_channels;
            std::size_t ch = st.back();
            for (std::size_t s = st.size(); s-- > 0;) {
                const std::size_t out = s > 0 ? st[s - 1] : arch.stem_channels;
                const std::string name = "decoder.stage" + std::to_string(st.size() - 1 - s);
                net_.add(std::make_unique<nn::Upsample2<T>>());
                net_.add(nn::Conv1d<T>::same(name + ".conv1", ch, out, arch.kernel));
                net_.add(std::make_unique<nn::ReLU<T>>());
                net_.add(nn::Conv1d<T>::same(name + ".conv2", out, out, arch.kernel));
                net_.add(std::make_unique<nn::ReLU<T>>());
                ch = out;
            }
            net_.add(nn::Conv1d<T>::same("decoder.head", ch, arch.in_channels, arch.stem_kernel));
        } else {
            const std::size_t c = arch.dilated_channels;
            net_.add(std::make_unique<nn::ReLU<T>>());
            net_.add(std::make_unique<nn::Conv1d<T>>("decoder.hidden", c, c, 1, 1, 1, 0, 0));
            net_.add(std::make_unique<nn::ReLU<T>>());
            net_.add(std::make_unique<nn::Conv1d<T>>("decoder.head", c, arch.in_channels, 1, 1, 1, 0, 0));
        }
    }

    Tensor<T> forward(Tensor<T> emb) {
        if (emb.channels != arch_.embedding_channels()) {
            fail(ErrorCode::shape_mismatch, "decoder expects " + std::to_string(arch_.embedding_channels()) +
                                                " embedding channels, got " + std::to_string(emb.channels));
        }
        return net_.forward(std::move(emb));
    }

    Tensor<T> backward(Tensor<T> grad) { return net_.backward(std::move(grad)); }

protected:
    void collect(std::vector<ParamTensor<T>*>& out) override { net_.collect(out); }

private:
    ArchitectureDescriptor arch_;
    nn::Sequential<T> net_;
};

/// Linear probing classifier: optional average pooling, flatten, affine.
template <class T>
class LinearProbe final : public ParamOwner<T> {
public:
    LinearProbe(std::size_t embedding_channels, std::size_t embedding_length, std::size_t pool, std::size_t n_cls)
        : pool_(pool), n_cls_(n_cls), flatten_dim_(embedding_channels * (embedding_length / pool)),
          linear_("probe", flatten_dim_, n_cls) {
        require(n_cls >= 1, ErrorCode::invalid_argument, "probe needs at least one class");
        require(pool >= 1 && embedding_length % pool == 0, ErrorCode::indivisible_length,
                "embedding length must be divisible by the probe pooling window");
        if (pool_ > 1) pooling_ = std::make_unique<nn::AvgPool<T>>(pool_);
    }

    Tensor<T> forward(Tensor<T> emb) {
        if (pooling_) emb = pooling_->forward(std::move(emb));
        return linear_.forward(std::move(emb));
    }

    Tensor<T> backward(Tensor<T> grad_logits) {
        Tensor<T> dh = linear_.backward(std::move(grad_logits));
        return pooling_ ? pooling_->backward(std::move(dh)) : dh;
    }

    std::size_t flatten_dim() const { return flatten_dim_; }
    std::size_t n_cls() const { return n_cls_; }

protected:
    void collect(std::vector<ParamTensor<T>*>& out) override { linear_.collect(out); }

private:
    std::size_t pool_, n_cls_, flatten_dim_;
    nn::Linear<T> linear_;
    std::unique_ptr<nn::AvgPool<T>> pooling_;
};

template <class T>
class Autoencoder {
public:
    explicit Autoencoder(const ArchitectureDescriptor& arch) : encoder(arch), decoder(arch) {}

    Tensor<T> forward(Tensor<T> x) { return decoder.forward(encoder.forward(std::move(x))); }

    void backward(Tensor<T> grad_recon) { encoder.backward(decoder.backward(std::move(grad_recon))); }

    void zero_grad() {
        encoder.zero_grad();
        decoder.zero_grad();
    }

    std::vector<ParamTensor<T>*> parameters() {
        auto p = encoder.parameters();
        auto d = decoder.parameters();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }

    void init(std::uint64_t seed) {
        encoder.init(seed);
        decoder.init(seed);
    }

    ModelParams export_params() {
        ModelParams out{encoder.arch(), {}};
        encoder.export_to(out.arrays);
        decoder.export_to(out.arrays);
        return out;
    }

    void load(const ModelParams& params) {
        require(params.arch == encoder.arch(), ErrorCode::shape_mismatch, "architecture mismatch");
        encoder.load_from(params);
        decoder.load_from(params);
    }

    Encoder<T> encoder;
    Decoder<T> decoder;
};

template <class T>
class Classifier {
public:
    Classifier(const ArchitectureDescriptor& arch, std::size_t frame_len, std::size_t n_cls)
        : encoder(arch),
          probe(checked_embedding_channels(arch, frame_len), arch.embedding_length(frame_len), arch.probe_pool,
                n_cls),
          frame_len_(frame_len) {}

    Tensor<T> forward(Tensor<T> x) {
        if (x.length != frame_len_) {
            fail(ErrorCode::shape_mismatch, "classifier built for length " + std::to_string(frame_len_) + ", got " +
                                                std::to_string(x.length));
        }
        return probe.forward(encoder.forward(std::move(x)));
    }

    /// Skips the encoder pass entirely when all encoder tensors are frozen.
    void backward(Tensor<T> grad_logits) {
        Tensor<T> demb = probe.backward(std::move(grad_logits));
        bool encoder_trainable = false;
        for (auto* p : encoder.parameters()) encoder_trainable |= !p->frozen;
        if (encoder_trainable) encoder.backward(std::move(demb));
    }

    void zero_grad() {
        encoder.zero_grad();
        probe.zero_grad();
    }

    std::vector<ParamTensor<T>*> parameters() {
        auto p = encoder.parameters();
        auto q = probe.parameters();
        p.insert(p.end(), q.begin(), q.end());
        return p;
    }

    ModelParams export_params() {
        ModelParams out{encoder.arch(), {}};
        encoder.export_to(out.arrays);
        probe.export_to(out.arrays);
        return out;
    }

    void load(const ModelParams& params) {
        require(params.arch == encoder.arch(), ErrorCode::shape_mismatch, "architecture mismatch");
        encoder.load_from(params);
        probe.load_from(params);
    }

    std::size_t frame_len() const { return frame_len_; }

    Encoder<T> encoder;
    LinearProbe<T> probe;

private:
    static std::size_t checked_embedding_channels(const ArchitectureDescriptor& arch, std::size_t frame_len) {
        arch.require_length(frame_len);
        return arch.embedding_channels();
    }

    std::size_t frame_len_;
};

/// Fresh autoencoder parameters for `arch`, deterministic per seed.
inline ModelParams init_params(const ArchitectureDescriptor& arch, std::uint64_t seed) {
    Autoencoder<float> model(arch);
    model.init(seed);
    return model.export_params();
}

/// Probe weights (flatten_dim x n_cls) and bias (n_cls).
struct ProbeParams {
    std::size_t flatten_dim = 0;
    std::size_t n_cls = 0;
    std::vector<float> weight;
    std::vector<float> bias;

    static ProbeParams from(const ModelParams& params) {
        const NamedArray* w = params.find("probe.weight");
        const NamedArray* b = params.find("probe.bias");
        require(w && b && w->shape.size() == 2, ErrorCode::shape_mismatch, "no probe parameters present");
        return {w->shape[0], w->shape[1], w->values, b->values};
    }
};

/// logits = flatten(pool(embedding)) . W + b.
template <class T>
Tensor<T> probe_forward(const Tensor<T>& embedding, const ProbeParams& probe, std::size_t pool = 1) {
    require(pool >= 1 && embedding.length % pool == 0, ErrorCode::indivisible_length, "pooling window mismatch");
    require(embedding.channels * (embedding.length / pool) == probe.flatten_dim, ErrorCode::shape_mismatch,
            "embedding flattens to " + std::to_string(embedding.channels * (embedding.length / pool)) +
                " values, probe expects " + std::to_string(probe.flatten_dim));
    require(probe.weight.size() == probe.flatten_dim * probe.n_cls && probe.bias.size() == probe.n_cls,
            ErrorCode::shape_mismatch, "probe parameter sizes inconsistent");
    LinearProbe<T> module(embedding.channels, embedding.length, pool, probe.n_cls);
    ModelParams p;
    p.arrays.push_back({"probe.weight", {probe.flatten_dim, probe.n_cls}, probe.weight});
    p.arrays.push_back({"probe.bias", {probe.n_cls}, probe.bias});
    module.load_from(p);
    return module.forward(embedding);
}

} // namespace rfmsm
