#pragma once

#include "streamtal/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace streamtal::detail {

// Little-endian scalar encoding independent of host byte order.

template <class UInt>
void put_uint(std::ostream& out, UInt value) {
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    }
    out.write(bytes, sizeof(UInt));
}

inline void put_f32(std::ostream& out, float value) { put_uint(out, std::bit_cast<std::uint32_t>(value)); }
inline void put_f64(std::ostream& out, double value) { put_uint(out, std::bit_cast<std::uint64_t>(value)); }

template <class UInt>
UInt get_uint(std::istream& in, const char* what) {
    unsigned char bytes[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
        throw IoError(std::string("truncated input while reading ") + what);
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
}

inline float get_f32(std::istream& in, const char* what) {
    return std::bit_cast<float>(get_uint<std::uint32_t>(in, what));
}
inline double get_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(get_uint<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4] = {};
    if (!in.read(got, 4)) throw FormatError("file too short for magic header");
    if (std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("bad magic, expected ") + magic);
    }
}

}  // namespace streamtal::detail
