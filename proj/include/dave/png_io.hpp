#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dave/common.hpp"
#include "dave/image.hpp"

// Minimal PNG codec: 8-bit RGB writer (filter 0, fixed compression level) and
// a reader for non-interlaced 8-bit gray/RGB/RGBA. Enough to round-trip the
// dataset images deterministically without an image library dependency.

namespace dave {

namespace detail {

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::uint8_t* data, std::size_t len) {
    put_u32be(out, static_cast<std::uint32_t>(len));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    const auto crc = ::crc32(0, out.data() + start, static_cast<uInt>(4 + len));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline void write_png(const std::string& path, const Image8& img) {
    check_arg(img.w > 0 && img.h > 0, "write_png: empty image");
    const std::size_t stride = static_cast<std::size_t>(img.w) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw[y * (stride + 1)] = 0;  // filter: none
        std::memcpy(raw.data() + y * (stride + 1) + 1, img.pix.data() + y * stride, stride);
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    const int rc = ::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6);
    check_state(rc == Z_OK, "write_png: deflate failed for " + path);
    compressed.resize(bound);

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    out.insert(out.end(), sig, sig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.w >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.w >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.w >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.w);
    ihdr[4] = static_cast<std::uint8_t>(img.h >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.h >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.h >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter method
    ihdr[12] = 0;  // no interlace
    detail::append_chunk(out, "IHDR", ihdr, 13);
    detail::append_chunk(out, "IDAT", compressed.data(), compressed.size());
    detail::append_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check_state(f.good(), "write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    check_state(f.good(), "write_png: write failed for " + path);
}

inline Image8 read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check_state(f.good(), "read_png: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    check_state(buf.size() > 8, "read_png: truncated file " + path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    check_state(std::memcmp(buf.data(), sig, 8) == 0, "read_png: not a PNG file: " + path);

    int w = 0, h = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = detail::get_u32be(buf.data() + pos);
        check_state(pos + 12 + len <= buf.size(), "read_png: corrupt chunk in " + path);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const std::uint8_t* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            check_state(len == 13, "read_png: bad IHDR in " + path);
            w = static_cast<int>(detail::get_u32be(data));
            h = static_cast<int>(detail::get_u32be(data + 4));
            check_state(data[8] == 8, "read_png: only 8-bit depth supported: " + path);
            color_type = data[9];
            check_state(color_type == 0 || color_type == 2 || color_type == 6,
                        "read_png: unsupported color type in " + path);
            check_state(data[12] == 0, "read_png: interlaced PNG not supported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    check_state(w > 0 && h > 0 && !idat.empty(), "read_png: missing image data in " + path);

    const int channels = color_type == 0 ? 1 : color_type == 2 ? 3 : 4;
    const std::size_t stride = static_cast<std::size_t>(w) * channels;
    std::vector<std::uint8_t> raw((stride + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int rc = ::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    check_state(rc == Z_OK && raw_len == raw.size(), "read_png: inflate failed for " + path);

    // undo per-row filters in place
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < h; ++y) {
        std::uint8_t* row = raw.data() + y * (stride + 1) + 1;
        const int filter = raw[y * (stride + 1)];
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<std::size_t>(channels) ? row[i - channels] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<std::size_t>(channels) ? prev[i - channels] : 0;
            int v = row[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: check_state(false, "read_png: unknown filter in " + path);
            }
            row[i] = static_cast<std::uint8_t>(v);
        }
        std::memcpy(prev.data(), row, stride);
    }

    Image8 img(w, h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* row = raw.data() + y * (stride + 1) + 1;
        for (int x = 0; x < w; ++x) {
            std::uint8_t* dst = img.px(x, y);
            if (channels == 1) {
                dst[0] = dst[1] = dst[2] = row[x];
            } else {
                dst[0] = row[x * channels];
                dst[1] = row[x * channels + 1];
                dst[2] = row[x * channels + 2];
            }
        }
    }
    return img;
}

}  // namespace dave
