#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "probsa/error.hpp"

// Little-endian primitive readers/writers shared by the bag and checkpoint formats.
namespace probsa::io {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b.data(), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    write_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
    write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_i32(std::ostream& os, std::int32_t v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void read_exact(std::istream& is, char* dst, std::size_t n, const std::string& what) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw DataError(what + ": truncated payload");
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::array<unsigned char, 4> b{};
    read_exact(is, reinterpret_cast<char*>(b.data()), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const std::string& what) {
    const std::uint64_t lo = read_u32(is, what);
    const std::uint64_t hi = read_u32(is, what);
    return lo | (hi << 32);
}

inline std::int32_t read_i32(std::istream& is, const std::string& what) { return std::bit_cast<std::int32_t>(read_u32(is, what)); }
inline float read_f32(std::istream& is, const std::string& what) { return std::bit_cast<float>(read_u32(is, what)); }
inline double read_f64(std::istream& is, const std::string& what) { return std::bit_cast<double>(read_u64(is, what)); }

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what) {
    std::array<char, 8> buf{};
    read_exact(is, buf.data(), magic.size(), what);
    if (std::string_view(buf.data(), magic.size()) != magic) {
        throw DataError(what + ": bad magic '" + std::string(buf.data(), magic.size()) + "', expected '" + std::string(magic) + "'");
    }
}

}  // namespace probsa::io
