#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgnerf {

struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const { return *this / norm(); }
    Vec3 cwiseMul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Seedable random source. Streams are split by key so per-ray /
/// per-view draws stay deterministic under any evaluation order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    /// Independent stream derived from this source's seed and a key.
    Rng split(std::uint64_t key) const {
        std::uint64_t h = seed_ ^ (key + 0x9e3779b97f4a7c15ULL + (seed_ << 6) + (seed_ >> 2));
        h ^= h >> 33; h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33; h *= 0xc4ceb9fe1a85ec53ULL;
        h ^= h >> 33;
        return Rng(h);
    }

    double uniform() { return unit_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_(engine_); }
    std::uint64_t next_u64() { return engine_(); }
    std::uint64_t seed() const { return seed_; }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Row-major H×W scalar map.
struct Grid {
    int height = 0, width = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0) : height(h), width(w), data(std::size_t(h) * w, fill) {}

    double& at(int r, int c) { return data[std::size_t(r) * width + c]; }
    double at(int r, int c) const { return data[std::size_t(r) * width + c]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Grid& o) const { return height == o.height && width == o.width; }

    Grid mirrored() const {
        Grid out(height, width);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                out.at(r, c) = at(r, width - 1 - c);
        return out;
    }
};

}  // namespace dgnerf
