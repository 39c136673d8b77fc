#pragma once

// Little-endian primitives shared by the .ecg, .eds and .eck containers.
// Readers throw format-error on short reads so truncated files never yield
// partial objects.

#include "ecalab/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace ecalab::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& out, T value) {
    write_bytes(out, &value, sizeof(T));
}

inline void read_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorKind::format_error, std::string("truncated file while reading ") + what);
}

template <typename T>
T read_le(std::istream& in, const char* what) {
    T value{};
    read_bytes(in, &value, sizeof(T), what);
    return value;
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char buf[4];
    read_bytes(in, buf, 4, "magic");
    if (std::memcmp(buf, magic, 4) != 0)
        throw Error(ErrorKind::format_error, std::string("bad magic, expected ") + magic);
}

inline void expect_eof(std::istream& in) {
    if (in.peek() != std::char_traits<char>::eof())
        throw Error(ErrorKind::format_error, "trailing bytes after payload");
}

// MSB-first packing: bit i -> byte i/8, bit 7 - i%8.
inline std::vector<std::uint8_t> pack_msb(const std::uint8_t* bits, std::size_t n) {
    std::vector<std::uint8_t> out((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (bits[i]) out[i >> 3] |= static_cast<std::uint8_t>(0x80U >> (i & 7));
    return out;
}

inline void unpack_msb(const std::uint8_t* bytes, std::size_t n, std::uint8_t* bits) {
    for (std::size_t i = 0; i < n; ++i) bits[i] = (bytes[i >> 3] >> (7 - (i & 7))) & 1U;
}

// Writes to path.tmp and renames into place.
void atomic_write(const std::string& path, const std::string& bytes);

}  // namespace ecalab::io
