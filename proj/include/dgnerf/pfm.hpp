#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>

#include "dgnerf/common.hpp"

namespace dgnerf {

// Grayscale portable float map, little-endian (scale header -1).
// PFM stores rows bottom-up.

inline void write_pfm(const std::string& path, const Grid& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_pfm: cannot open " + path);
    out << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";
    std::vector<float> row(map.width);
    for (int r = map.height - 1; r >= 0; --r) {
        for (int c = 0; c < map.width; ++c) row[c] = float(map.at(r, c));
        out.write(reinterpret_cast<const char*>(row.data()), sizeof(float) * map.width);
    }
    if (!out) throw DataError("write_pfm: write failed for " + path);
}

inline Grid read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_pfm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    in >> magic >> w >> h >> scale;
    if (magic != "Pf" || w <= 0 || h <= 0)
        throw DataError("read_pfm: not a grayscale PFM: " + path);
    if (scale >= 0) throw DataError("read_pfm: big-endian PFM unsupported: " + path);
    in.get();  // single whitespace after header
    Grid map(h, w);
    std::vector<float> row(w);
    for (int r = h - 1; r >= 0; --r) {
        in.read(reinterpret_cast<char*>(row.data()), sizeof(float) * w);
        if (!in) throw DataError("read_pfm: truncated data in " + path);
        for (int c = 0; c < w; ++c) map.at(r, c) = row[c];
    }
    return map;
}

}  // namespace dgnerf
