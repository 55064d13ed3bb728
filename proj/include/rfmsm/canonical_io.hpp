#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "rfmsm/binary_io.hpp"
#include "rfmsm/iqcore.hpp"

// Canonical dataset container:
//   "RFMSM1\n" | u64 LE header length | UTF-8 JSON header |
//   f32 LE frames [frame][I then Q][sample] | optional (i16 class, i16 snr) per frame
namespace rfmsm {

inline constexpr std::string_view kCanonicalMagic{"RFMSM1\n", 7};

inline nlohmann::json canonical_header(const SignalDataset& ds) {
    nlohmann::json h;
    h["num_frames"] = ds.size();
    h["frame_len"] = ds.meta.frame_len;
    h["n_cls"] = ds.meta.n_cls;
    h["t_res_us"] = ds.meta.t_res_us;
    h["snr_grid"] = ds.meta.snr_grid;
    h["class_names"] = ds.meta.class_names;
    h["has_labels"] = ds.has_labels();
    return h;
}

/// `provenance`, when not null, is stored under the header's "provenance" key.
inline void write_canonical(std::ostream& os, const SignalDataset& ds,
                            const nlohmann::json& provenance = nullptr) {
    ds.validate();
    for (const auto& l : ds.labels) {
        require(l.class_id <= std::numeric_limits<std::int16_t>::max() &&
                    l.snr_db >= std::numeric_limits<std::int16_t>::min() &&
                    l.snr_db <= std::numeric_limits<std::int16_t>::max(),
                ErrorCode::invalid_argument, "label does not fit in int16");
    }
    nlohmann::json h = canonical_header(ds);
    if (!provenance.is_null()) h["provenance"] = provenance;
    const std::string header = h.dump();
    os.write(kCanonicalMagic.data(), static_cast<std::streamsize>(kCanonicalMagic.size()));
    binary::put_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));

    std::vector<float> buf(ds.meta.frame_len);
    for (const auto& f : ds.frames) {
        for (const auto* channel : {&f.i, &f.q}) {
            for (std::size_t n = 0; n < buf.size(); ++n) buf[n] = static_cast<float>((*channel)[n]);
            binary::put_f32s(os, buf);
        }
    }
    for (const auto& l : ds.labels) {
        binary::put_i16(os, static_cast<std::int16_t>(l.class_id));
        binary::put_i16(os, static_cast<std::int16_t>(l.snr_db));
    }
    require(static_cast<bool>(os), ErrorCode::io, "write failed");
}

inline void write_canonical(const std::filesystem::path& path, const SignalDataset& ds,
                            const nlohmann::json& provenance = nullptr) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require(os.is_open(), ErrorCode::io, "cannot open " + path.string() + " for writing");
    write_canonical(os, ds, provenance);
}

/// Parses a canonical container from memory. Distinct error codes for bad
/// magic, malformed header, truncated frame body and label-region mismatch.
inline SignalDataset parse_canonical(std::span<const unsigned char> bytes, std::string name = {}) {
    binary::Reader r(bytes, ErrorCode::bad_magic);
    auto magic = r.take(kCanonicalMagic.size());
    require(std::equal(magic.begin(), magic.end(), kCanonicalMagic.begin(),
                       [](unsigned char a, char b) { return a == static_cast<unsigned char>(b); }),
            ErrorCode::bad_magic, "bad magic: not an RFMSM1 dataset");

    r.set_overrun_code(ErrorCode::bad_header);
    const std::uint64_t header_len = r.u64();
    auto header_bytes = r.take(header_len);
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("malformed header: ") + e.what());
    }

    SignalDataset ds;
    std::size_t num_frames = 0;
    bool has_labels = false;
    try {
        num_frames = h.at("num_frames").get<std::size_t>();
        ds.meta.frame_len = h.at("frame_len").get<std::size_t>();
        ds.meta.n_cls = h.at("n_cls").get<int>();
        ds.meta.t_res_us = h.at("t_res_us").get<double>();
        ds.meta.snr_grid = h.at("snr_grid").get<std::vector<int>>();
        ds.meta.class_names = h.at("class_names").get<std::vector<std::string>>();
        has_labels = h.at("has_labels").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::bad_header, std::string("incomplete header: ") + e.what());
    }
    ds.meta.name = h.contains("name") ? h["name"].get<std::string>() : std::move(name);
    require(ds.meta.frame_len >= 1, ErrorCode::bad_header, "frame_len must be >= 1");

    r.set_overrun_code(ErrorCode::truncated_body);
    const std::size_t frame_bytes = 2 * ds.meta.frame_len * sizeof(float);
    if (r.remaining() / frame_bytes < num_frames) {
        fail(ErrorCode::truncated_body, "truncated body: header declares " + std::to_string(num_frames) +
                                            " frames, file holds " + std::to_string(r.remaining() / frame_bytes));
    }
    ds.frames.reserve(num_frames);
    std::vector<float> buf(ds.meta.frame_len);
    for (std::size_t k = 0; k < num_frames; ++k) {
        IQFrame f;
        r.f32s(buf);
        f.i.assign(buf.begin(), buf.end());
        r.f32s(buf);
        f.q.assign(buf.begin(), buf.end());
        ds.frames.push_back(std::move(f));
    }

    const std::size_t label_bytes = has_labels ? num_frames * 4 : 0;
    if (r.remaining() != label_bytes) {
        fail(ErrorCode::label_count_mismatch,
             "label region holds " + std::to_string(r.remaining()) + " bytes, expected " +
                 std::to_string(label_bytes) + " for " + std::to_string(num_frames) + " frames");
    }
    if (has_labels) {
        ds.labels.resize(num_frames);
        for (auto& l : ds.labels) {
            l.class_id = r.i16();
            l.snr_db = r.i16();
        }
    }
    ds.assign_sequential_ids();
    ds.validate();
    return ds;
}

inline SignalDataset load_canonical(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.is_open(), ErrorCode::io, "cannot open " + path.string());
    const auto bytes = binary::slurp(is);
    return parse_canonical(bytes, path.stem().string());
}

} // namespace rfmsm
