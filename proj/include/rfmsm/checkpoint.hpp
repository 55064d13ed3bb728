#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "rfmsm/binary_io.hpp"
#include "rfmsm/iqcore.hpp"
#include "rfmsm/models.hpp"
#include "rfmsm/optim.hpp"

// Checkpoint container:
//   "RFCKPT1\n" | u64 LE header length | JSON header |
//   f32 LE parameter arrays, then optimizer moment arrays, in manifest order.
// The header carries no wall-clock fields so identical runs give identical bytes.
namespace rfmsm {

inline constexpr std::string_view kCheckpointMagic{"RFCKPT1\n", 8};

enum class CheckpointKind { autoencoder, classifier };

inline std::string to_string(CheckpointKind k) { return k == CheckpointKind::autoencoder ? "autoencoder" : "classifier"; }

struct Checkpoint {
    CheckpointKind kind = CheckpointKind::autoencoder;
    ModelParams params;
    AdamState<float> optimizer;
    std::optional<StandardizationStats> stats;
    std::size_t frame_len = 0;  // classifier input length; 0 for autoencoders
    std::size_t n_cls = 0;
    nlohmann::json provenance = nlohmann::json::object();

    friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
        auto same_opt = [](const AdamState<float>& x, const AdamState<float>& y) {
            if (x.step != y.step || x.moments.size() != y.moments.size()) return false;
            for (std::size_t k = 0; k < x.moments.size(); ++k) {
                const auto &p = x.moments[k], &q = y.moments[k];
                if (p.name != q.name || p.shape != q.shape || p.m != q.m || p.v != q.v || p.step != q.step) return false;
            }
            return x.hyper.beta1 == y.hyper.beta1 && x.hyper.beta2 == y.hyper.beta2 && x.hyper.eps == y.hyper.eps;
        };
        return a.kind == b.kind && a.params == b.params && same_opt(a.optimizer, b.optimizer) && a.stats == b.stats &&
               a.frame_len == b.frame_len && a.n_cls == b.n_cls && a.provenance == b.provenance;
    }
};

inline nlohmann::json stats_to_json(const StandardizationStats& s) {
    return {{"mean_i", s.mean_i}, {"mean_q", s.mean_q}, {"var_i", s.var_i}, {"var_q", s.var_q}};
}

inline StandardizationStats stats_from_json(const nlohmann::json& j) {
    StandardizationStats s;
    s.mean_i = j.at("mean_i").get<double>();
    s.mean_q = j.at("mean_q").get<double>();
    s.var_i = j.at("var_i").get<double>();
    s.var_q = j.at("var_q").get<double>();
    s.validate();
    return s;
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    nlohmann::json h;
    h["kind"] = to_string(ck.kind);
    h["architecture"] = ck.params.arch;
    h["frame_len"] = ck.frame_len;
    h["n_cls"] = ck.n_cls;
    h["standardization"] = ck.stats ? stats_to_json(*ck.stats) : nlohmann::json(nullptr);
    h["provenance"] = ck.provenance;

    std::uint64_t offset = 0;
    auto manifest_entry = [&](const std::string& name, const std::vector<std::size_t>& shape, std::size_t count) {
        nlohmann::json e{{"name", name}, {"shape", shape}, {"offset", offset}, {"count", count}};
        offset += count * sizeof(float);
        return e;
    };
    auto params = nlohmann::json::array();
    for (const auto& a : ck.params.arrays) params.push_back(manifest_entry(a.name, a.shape, a.values.size()));
    h["parameters"] = params;

    auto moments = nlohmann::json::array();
    for (const auto& m : ck.optimizer.moments) {
        moments.push_back(manifest_entry(m.name + ".m", m.shape, m.m.size()));
        moments.back()["step"] = m.step;
        moments.push_back(manifest_entry(m.name + ".v", m.shape, m.v.size()));
    }
    h["optimizer"] = {{"kind", "adam"},
                      {"beta1", ck.optimizer.hyper.beta1},
                      {"beta2", ck.optimizer.hyper.beta2},
                      {"eps", ck.optimizer.hyper.eps},
                      {"step", ck.optimizer.step},
                      {"arrays", moments}};

    const std::string header = h.dump();
    os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
    binary::put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& a : ck.params.arrays) binary::put_f32s(os, a.values);
    for (const auto& m : ck.optimizer.moments) {
        binary::put_f32s(os, m.m);
        binary::put_f32s(os, m.v);
    }
    require(static_cast<bool>(os), ErrorCode::io, "checkpoint write failed");
}

inline std::string checkpoint_bytes(const Checkpoint& ck) {
    std::ostringstream os(std::ios::binary);
    write_checkpoint(os, ck);
    return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    write_checkpoint(os, ck);
}

namespace detail {

inline std::vector<std::size_t> manifest_shape(const nlohmann::json& e, std::size_t& count) {
    auto shape = e.at("shape").get<std::vector<std::size_t>>();
    count = e.at("count").get<std::size_t>();
    std::size_t expect = 1;
    for (auto d : shape) expect *= d;
    require(expect == count, ErrorCode::bad_header, "manifest entry '" + e.at("name").get<std::string>() +
                                                        "' has inconsistent shape and count");
    return shape;
}

} // namespace detail

inline Checkpoint parse_checkpoint(std::span<const unsigned char> bytes) {
    binary::Reader r(bytes, ErrorCode::bad_magic);
    auto magic = r.take(kCheckpointMagic.size());
    require(std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin()), ErrorCode::bad_magic,
            "not a checkpoint file (bad magic)");
    r.set_overrun_code(ErrorCode::bad_header);
    const std::uint64_t header_len = r.u64();
    auto hb = r.take(header_len);

    Checkpoint ck;
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(hb.begin(), hb.end());
        const auto kind = h.at("kind").get<std::string>();
        require(kind == "autoencoder" || kind == "classifier", ErrorCode::bad_header, "unknown checkpoint kind");
        ck.kind = kind == "autoencoder" ? CheckpointKind::autoencoder : CheckpointKind::classifier;
        ck.params.arch = h.at("architecture").get<ArchitectureDescriptor>();
        ck.frame_len = h.at("frame_len").get<std::size_t>();
        ck.n_cls = h.at("n_cls").get<std::size_t>();
        if (!h.at("standardization").is_null()) ck.stats = stats_from_json(h.at("standardization"));
        ck.provenance = h.at("provenance");
        const auto& opt = h.at("optimizer");
        ck.optimizer.hyper = {opt.at("beta1").get<double>(), opt.at("beta2").get<double>(), opt.at("eps").get<double>()};
        ck.optimizer.step = opt.at("step").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("malformed checkpoint header: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::bad_header, std::string("malformed checkpoint header: ") + e.what());
    }

    r.set_overrun_code(ErrorCode::truncated_body);
    try {
        for (const auto& e : h.at("parameters")) {
            std::size_t count = 0;
            auto shape = detail::manifest_shape(e, count);
            NamedArray a{e.at("name").get<std::string>(), shape, std::vector<float>(count)};
            r.f32s(a.values);
            ck.params.arrays.push_back(std::move(a));
        }
        const auto& arrays = h.at("optimizer").at("arrays");
        require(arrays.size() % 2 == 0, ErrorCode::bad_header, "optimizer manifest must pair m and v arrays");
        for (std::size_t k = 0; k < arrays.size(); k += 2) {
            std::size_t cm = 0, cv = 0;
            auto shape = detail::manifest_shape(arrays[k], cm);
            detail::manifest_shape(arrays[k + 1], cv);
            std::string name = arrays[k].at("name").get<std::string>();
            require(name.size() > 2 && name.ends_with(".m") && cm == cv, ErrorCode::bad_header,
                    "malformed optimizer manifest entry '" + name + "'");
            name.resize(name.size() - 2);
            AdamMoments<float> mo{name, shape, std::vector<float>(cm), std::vector<float>(cv),
                                  arrays[k].at("step").get<std::uint64_t>()};
            r.f32s(mo.m);
            r.f32s(mo.v);
            ck.optimizer.moments.push_back(std::move(mo));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("malformed checkpoint manifest: ") + e.what());
    }
    require(r.remaining() == 0, ErrorCode::bad_header, "trailing bytes after checkpoint body");
    for (const auto& a : ck.params.arrays) {
        for (float v : a.values) {
            if (!std::isfinite(v)) fail(ErrorCode::numerical_failure, "non-finite value in parameter '" + a.name + "'");
        }
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), ErrorCode::io, "cannot open checkpoint '" + path.string() + "'");
    const auto bytes = binary::slurp(is);
    return parse_checkpoint(bytes);
}

/// Content hash of the serialized checkpoint, as 16 hex digits.
inline std::string checkpoint_id(const Checkpoint& ck) { return hex64(fnv1a64(checkpoint_bytes(ck))); }

} // namespace rfmsm
