#pragma once

// Minimal grayscale PNG codec (8/16-bit, non-interlaced) over zlib. Writes
// filter-0 scanlines; reads any standard filter. Enough for the dataset cache
// and rendered outputs; not a general-purpose PNG library.

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "tat/common.hpp"
#include "tat/data.hpp"

namespace tat {

namespace detail {

inline void be32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

inline uint32_t rd32(const unsigned char* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& payload) {
    be32(out, static_cast<uint32_t>(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    be32(out, crc);
}

}  // namespace detail

// Encodes a [0,1] image as 16-bit grayscale PNG bytes.
inline std::vector<unsigned char> encode_png16(const Image& img) {
    std::vector<unsigned char> ihdr;
    detail::be32(ihdr, static_cast<uint32_t>(img.w));
    detail::be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.insert(ihdr.end(), {16, 0, 0, 0, 0});  // depth, gray, deflate, adaptive, no interlace

    std::vector<unsigned char> raw;
    raw.reserve(static_cast<size_t>(img.h * (1 + 2 * img.w)));
    for (int64_t y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        for (int64_t x = 0; x < img.w; ++x) {
            const double v = std::clamp(img.at(y, x), 0.0, 1.0);
            const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
            raw.push_back(static_cast<unsigned char>(q >> 8));
            raw.push_back(static_cast<unsigned char>(q & 0xff));
        }
    }
    uLongf zlen = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zlen);
    if (::compress2(zdata.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw InternalError("png: deflate failed");
    zdata.resize(zlen);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", zdata);
    detail::png_chunk(out, "IEND", {});
    return out;
}

inline void write_png16(const std::string& path, const Image& img) {
    auto bytes = encode_png16(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("png: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Decodes an 8/16-bit grayscale non-interlaced PNG into a [0,1] image.
inline Image decode_png(const std::vector<unsigned char>& bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw UsageError("png: bad signature");
    size_t pos = 8;
    int64_t w = 0, h = 0;
    int depth = 0;
    std::vector<unsigned char> zdata;
    while (pos + 12 <= bytes.size()) {
        const uint32_t len = detail::rd32(bytes.data() + pos);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = detail::rd32(payload);
            h = detail::rd32(payload + 4);
            depth = payload[8];
            if (payload[9] != 0 || payload[12] != 0)
                throw UsageError("png: only non-interlaced grayscale is supported");
            if (depth != 8 && depth != 16) throw UsageError("png: unsupported bit depth");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            zdata.insert(zdata.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || zdata.empty()) throw UsageError("png: missing image data");
    const int bpp = depth / 8;
    const size_t row_bytes = static_cast<size_t>(w) * static_cast<size_t>(bpp);
    std::vector<unsigned char> raw(static_cast<size_t>(h) * (1 + row_bytes));
    uLongf rlen = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &rlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
        rlen != raw.size())
        throw UsageError("png: inflate failed");

    // unfilter (bytewise, per the PNG spec)
    std::vector<unsigned char> px(static_cast<size_t>(h) * row_bytes);
    auto paeth = [](int a, int b, int c) {
        const int p = a + b - c, pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
        if (pa <= pb && pa <= pc) return a;
        return pb <= pc ? b : c;
    };
    for (int64_t y = 0; y < h; ++y) {
        const unsigned char filter = raw[static_cast<size_t>(y) * (1 + row_bytes)];
        const unsigned char* src = raw.data() + static_cast<size_t>(y) * (1 + row_bytes) + 1;
        unsigned char* dst = px.data() + static_cast<size_t>(y) * row_bytes;
        const unsigned char* up = y > 0 ? dst - row_bytes : nullptr;
        for (size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw UsageError("png: unknown filter type");
            }
            dst[i] = static_cast<unsigned char>(v & 0xff);
        }
    }
    Image img = Image::filled(h, w);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const unsigned char* p = px.data() + static_cast<size_t>(y) * row_bytes +
                                     static_cast<size_t>(x) * static_cast<size_t>(bpp);
            img.at(y, x) = depth == 16 ? (double((p[0] << 8) | p[1]) / 65535.0)
                                       : (double(p[0]) / 255.0);
        }
    return img;
}

inline Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("png: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace tat
