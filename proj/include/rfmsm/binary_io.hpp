#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rfmsm/error.hpp"

// Little-endian primitives shared by the on-disk formats.
namespace rfmsm::binary {

template <class UInt>
inline void put_uint(std::ostream& os, UInt value) {
    unsigned char bytes[sizeof(UInt)];
    for (std::size_t k = 0; k < sizeof(UInt); ++k) bytes[k] = static_cast<unsigned char>(value >> (8 * k));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(UInt));
}

inline void put_u64(std::ostream& os, std::uint64_t v) { put_uint(os, v); }
inline void put_u32(std::ostream& os, std::uint32_t v) { put_uint(os, v); }
inline void put_i16(std::ostream& os, std::int16_t v) { put_uint(os, static_cast<std::uint16_t>(v)); }
inline void put_f32(std::ostream& os, float v) { put_uint(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_uint(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_f32s(std::ostream& os, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)));
    } else {
        for (float v : values) put_f32(os, v);
    }
}

/// Reads from an in-memory buffer; any overrun raises `overrun_code`.
class Reader {
public:
    Reader(std::span<const unsigned char> bytes, ErrorCode overrun_code)
        : bytes_(bytes), code_(overrun_code) {}

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    void set_overrun_code(ErrorCode code) { code_ = code; }

    std::span<const unsigned char> take(std::size_t n) {
        if (n > remaining()) {
            fail(code_, overrun_message_(n));
        }
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <class UInt>
    UInt uint() {
        auto b = take(sizeof(UInt));
        UInt v = 0;
        for (std::size_t k = 0; k < sizeof(UInt); ++k) v |= static_cast<UInt>(static_cast<UInt>(b[k]) << (8 * k));
        return v;
    }

    std::uint64_t u64() { return uint<std::uint64_t>(); }
    std::uint32_t u32() { return uint<std::uint32_t>(); }
    std::int16_t i16() { return static_cast<std::int16_t>(uint<std::uint16_t>()); }
    float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

    void f32s(std::span<float> out) {
        auto b = take(out.size() * sizeof(float));
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), b.data(), b.size());
        } else {
            for (std::size_t k = 0; k < out.size(); ++k) {
                std::uint32_t v = 0;
                for (std::size_t j = 0; j < 4; ++j) v |= static_cast<std::uint32_t>(b[4 * k + j]) << (8 * j);
                out[k] = std::bit_cast<float>(v);
            }
        }
    }

private:
    std::string overrun_message_(std::size_t n) const {
        return "truncated input: needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
               ", only " + std::to_string(remaining()) + " remain";
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
    ErrorCode code_;
};

inline std::vector<unsigned char> slurp(std::istream& is) {
    std::vector<unsigned char> out;
    char buf[1 << 16];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        out.insert(out.end(), buf, buf + is.gcount());
    }
    return out;
}

} // namespace rfmsm::binary
