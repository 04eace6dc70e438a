#pragma once

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "dgnerf/common.hpp"
#include "dgnerf/scenesim.hpp"

namespace dgnerf {

// Minimal 8-bit RGB PNG codec (enough for dataset images).

namespace detail_png {

inline void put_u32(std::string& s, std::uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_chunk(std::ofstream& out, const char type[4], const std::string& data) {
    std::string head;
    put_u32(head, std::uint32_t(data.size()));
    out.write(head.data(), 4);
    out.write(type, 4);
    out.write(data.data(), std::streamsize(data.size()));
    std::uint32_t crc = ::crc32(0, nullptr, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data()), uInt(data.size()));
    std::string tail;
    put_u32(tail, crc);
    out.write(tail.data(), 4);
}

}  // namespace detail_png

inline void write_png(const std::string& path, const Image& img) {
    using namespace detail_png;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_png: cannot open " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::string ihdr;
    put_u32(ihdr, std::uint32_t(img.width));
    put_u32(ihdr, std::uint32_t(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    write_chunk(out, "IHDR", ihdr);

    std::string raw;
    raw.reserve(std::size_t(img.height) * (1 + 3 * img.width));
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);  // filter type none
        for (int c = 0; c < img.width; ++c) {
            const Vec3& p = img.at(r, c);
            auto q = [](double v) {
                return char(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            };
            raw.push_back(q(p.x));
            raw.push_back(q(p.y));
            raw.push_back(q(p.z));
        }
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::string idat(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 9) != Z_OK)
        throw DataError("write_png: deflate failed");
    idat.resize(bound);
    write_chunk(out, "IDAT", idat);
    write_chunk(out, "IEND", "");
}

inline Image read_png(const std::string& path) {
    using namespace detail_png;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_png: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 + 12 || std::memcmp(bytes.data() + 1, "PNG", 3) != 0)
        throw DataError("read_png: not a PNG: " + path);

    int width = 0, height = 0;
    std::string idat;
    std::size_t pos = 8;
    while (pos + 12 <= bytes.size()) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        const std::uint32_t len = get_u32(p);
        const std::string type(bytes.data() + pos + 4, 4);
        if (pos + 12 + len > bytes.size()) throw DataError("read_png: truncated " + path);
        const char* data = bytes.data() + pos + 8;
        if (type == "IHDR") {
            width = int(get_u32(reinterpret_cast<const unsigned char*>(data)));
            height = int(get_u32(reinterpret_cast<const unsigned char*>(data) + 4));
            if (data[8] != 8 || data[9] != 2)
                throw DataError("read_png: only 8-bit RGB supported: " + path);
        } else if (type == "IDAT") {
            idat.append(data, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw DataError("read_png: missing IHDR in " + path);

    const std::size_t stride = 1 + 3 * std::size_t(width);
    std::string raw(stride * height, '\0');
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len,
                   reinterpret_cast<const Bytef*>(idat.data()), uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw DataError("read_png: inflate failed for " + path);

    Image img(height, width);
    for (int r = 0; r < height; ++r) {
        auto* row = reinterpret_cast<unsigned char*>(raw.data()) + r * stride;
        const int filter = row[0];
        unsigned char* cur = row + 1;
        unsigned char* up = r > 0 ? reinterpret_cast<unsigned char*>(raw.data()) +
                                        (r - 1) * stride + 1
                                  : nullptr;
        for (int i = 0; i < 3 * width; ++i) {
            const int a = i >= 3 ? cur[i - 3] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= 3) ? up[i - 3] : 0;
            int x = cur[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: {
                    const int pp = a + b - c;
                    const int pa = std::abs(pp - a), pb = std::abs(pp - b), pc = std::abs(pp - c);
                    x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw DataError("read_png: bad filter in " + path);
            }
            cur[i] = (unsigned char)(x & 0xff);
        }
        for (int c = 0; c < width; ++c)
            img.at(r, c) = {cur[3 * c] / 255.0, cur[3 * c + 1] / 255.0, cur[3 * c + 2] / 255.0};
    }
    return img;
}

}  // namespace dgnerf
