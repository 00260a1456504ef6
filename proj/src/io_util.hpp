#pragma once

// Internal file helpers: JSON-header-plus-float32 payloads. Doubles are
// narrowed to float32 exactly at this boundary and nowhere else.

#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lens/errors.hpp"
#include "lens/kernel.hpp"

namespace lens::detail {

inline void append_f32le(std::string& out, std::span<const double> v) {
    for (double d : v) {
        const auto bits = std::bit_cast<uint32_t>(static_cast<float>(d));
        out.push_back(static_cast<char>(bits & 0xFF));
        out.push_back(static_cast<char>((bits >> 8) & 0xFF));
        out.push_back(static_cast<char>((bits >> 16) & 0xFF));
        out.push_back(static_cast<char>((bits >> 24) & 0xFF));
    }
}

inline Vec parse_f32le(std::span<const char> bytes, size_t count, size_t& offset,
                       const char* what) {
    if (offset + count * 4 > bytes.size())
        throw ParseError(std::string(what) + ": payload truncated");
    Vec out(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (int b = 3; b >= 0; --b)
            bits = (bits << 8) | static_cast<uint8_t>(bytes[offset + i * 4 + b]);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    offset += count * 4;
    return out;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw ParseError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open: " + path);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return content;
}

// Splits off the first line (the JSON header); offset lands on the payload.
inline std::string header_line(const std::string& content, size_t& offset, const char* what) {
    size_t nl = content.find('\n');
    if (nl == std::string::npos) throw ParseError(std::string(what) + ": missing header line");
    offset = nl + 1;
    return content.substr(0, nl);
}

}  // namespace lens::detail
