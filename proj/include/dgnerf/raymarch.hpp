#pragma once

#include <algorithm>
#include <numbers>

#include "dgnerf/common.hpp"

namespace dgnerf {

/// Batch of rays driving rendering and supervision.
struct RayBundle {
    std::vector<Vec3> origins;
    std::vector<Vec3> directions;  // unit length
    double near = 0, far = 0;
    std::vector<int> pixel_ids;

    std::size_t size() const { return origins.size(); }

    void validate() const {
        if (!std::isfinite(near) || !std::isfinite(far))
            throw InputError("ray bundle: non-finite near/far");
        if (!(near > 0) || !(far > near))
            throw InputError("ray bundle: require 0 < near < far");
        for (const auto& d : directions)
            if (std::abs(d.norm() - 1.0) > 1e-6)
                throw InputError("ray bundle: direction not unit length");
    }
};

/// Per-ray quadrature distances and segment widths. The terminal
/// segment width is far - t_last so the quadrature stays inside the
/// declared frustum.
struct RaySegments {
    std::vector<double> distances;  // strictly increasing, in [near, far]
    std::vector<double> deltas;     // same length, all > 0
};

struct QuadratureSegments {
    std::vector<RaySegments> rays;
    double near = 0, far = 0;
};

struct RayRender {
    Vec3 color;
    double depth = 0;
    std::vector<double> weights;
    double residual_transmittance = 1;
};

inline void finalize_deltas(RaySegments& seg, double far) {
    const auto n = seg.distances.size();
    seg.deltas.resize(n);
    for (std::size_t i = 0; i + 1 < n; ++i)
        seg.deltas[i] = seg.distances[i + 1] - seg.distances[i];
    if (n > 0) seg.deltas[n - 1] = std::max(far - seg.distances[n - 1], 1e-12);
}

/// One uniform draw per equal-width bin partitioning [near, far].
inline QuadratureSegments stratified_sample(const RayBundle& bundle, int n, Rng& rng) {
    if (n < 2) throw InputError("stratified_sample: need n >= 2");
    if (!std::isfinite(bundle.near) || !std::isfinite(bundle.far))
        throw InputError("stratified_sample: non-finite near/far");

    QuadratureSegments out;
    out.near = bundle.near;
    out.far = bundle.far;
    out.rays.resize(bundle.size());
    const double width = (bundle.far - bundle.near) / n;
    for (std::size_t r = 0; r < bundle.size(); ++r) {
        Rng ray_rng = rng.split(r);
        auto& seg = out.rays[r];
        seg.distances.resize(n);
        for (int i = 0; i < n; ++i)
            seg.distances[i] = bundle.near + (i + ray_rng.uniform()) * width;
        // guard against ties in degenerate-width intervals
        for (int i = 1; i < n; ++i)
            if (seg.distances[i] <= seg.distances[i - 1])
                seg.distances[i] = std::nextafter(seg.distances[i - 1], bundle.far);
        finalize_deltas(seg, bundle.far);
    }
    return out;
}

/// w_i = T_i (1 - exp(-sigma_i delta_i)),  T_i = exp(-sum_{j<i} sigma_j delta_j).
struct WeightsResult {
    std::vector<double> weights;
    std::vector<double> transmittance;
    double residual = 1;  // T after the last sample
};

inline WeightsResult compute_weights(const std::vector<double>& sigmas,
                                     const RaySegments& seg) {
    const auto n = seg.distances.size();
    if (sigmas.size() != n)
        throw InputError("compute_weights: sigma/distance length mismatch");
    for (double s : sigmas) {
        if (!std::isfinite(s)) throw InputError("compute_weights: non-finite sigma");
        if (s < 0) throw InputError("compute_weights: negative sigma");
    }
    WeightsResult out;
    out.weights.resize(n);
    out.transmittance.resize(n);
    double tau = 0;  // accumulated optical depth
    for (std::size_t i = 0; i < n; ++i) {
        const double T = std::exp(-tau);
        out.transmittance[i] = T;
        const double alpha = -std::expm1(-sigmas[i] * seg.deltas[i]);
        out.weights[i] = T * alpha;
        tau += sigmas[i] * seg.deltas[i];
    }
    out.residual = std::exp(-tau);
    return out;
}

/// Reverse pass of compute_weights: given dL/dw, accumulate dL/dsigma.
inline std::vector<double> compute_weights_backward(const std::vector<double>& sigmas,
                                                    const RaySegments& seg,
                                                    const WeightsResult& fwd,
                                                    const std::vector<double>& dL_dw) {
    const auto n = sigmas.size();
    std::vector<double> dsigma(n, 0.0);
    // dw_i/dsigma_i = T_i delta_i exp(-sigma_i delta_i)
    // dw_i/dsigma_k = -delta_k w_i  for k < i  (through T_i)
    double suffix = 0;  // sum_{i>k} dL/dw_i * w_i
    for (std::size_t k = n; k-- > 0;) {
        const double e = std::exp(-sigmas[k] * seg.deltas[k]);
        dsigma[k] = dL_dw[k] * fwd.transmittance[k] * seg.deltas[k] * e
                    - seg.deltas[k] * suffix;
        suffix += dL_dw[k] * fwd.weights[k];
    }
    return dsigma;
}

inline Vec3 render_color(const std::vector<double>& weights, const std::vector<Vec3>& colors) {
    if (weights.size() != colors.size())
        throw InputError("render_color: length mismatch");
    Vec3 c;
    for (std::size_t i = 0; i < weights.size(); ++i) c += weights[i] * colors[i];
    return c;
}

inline double render_depth(const std::vector<double>& weights, const std::vector<double>& distances) {
    if (weights.size() != distances.size())
        throw InputError("render_depth: length mismatch");
    double d = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) d += weights[i] * distances[i];
    return d;
}

/// Frequency encoding: per scalar p emit (sin(2^k pi p), cos(2^k pi p)), k = 0..L-1.
inline void positional_encode_scalar(double p, int levels, std::vector<double>& out) {
    double f = std::numbers::pi;
    for (int k = 0; k < levels; ++k) {
        out.push_back(std::sin(f * p));
        out.push_back(std::cos(f * p));
        f *= 2.0;
    }
}

inline std::vector<double> positional_encode(double p, int levels) {
    if (levels < 1) throw InputError("positional_encode: levels >= 1");
    std::vector<double> out;
    out.reserve(2 * std::size_t(levels));
    positional_encode_scalar(p, levels, out);
    return out;
}

inline std::vector<double> positional_encode(const Vec3& v, int levels) {
    if (levels < 1) throw InputError("positional_encode: levels >= 1");
    std::vector<double> out;
    out.reserve(6 * std::size_t(levels));
    positional_encode_scalar(v.x, levels, out);
    positional_encode_scalar(v.y, levels, out);
    positional_encode_scalar(v.z, levels, out);
    return out;
}

}  // namespace dgnerf
