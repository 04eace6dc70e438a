#pragma once

#include "dgnerf/common.hpp"

namespace dgnerf {

struct LossWeights {
    double lambda = 0.007;  // depth-loss balance
    double gamma = 1.0;     // uncertainty exponent

    void validate() const {
        if (!(lambda >= 0) || !std::isfinite(lambda))
            throw InputError("LossWeights: lambda >= 0");
        if (!(gamma >= 0) || !std::isfinite(gamma))
            throw InputError("LossWeights: gamma >= 0");
    }
};

struct LossBreakdown {
    double photo = 0;
    double depth = 0;
    double total = 0;
    std::vector<double> per_ray_photo;
    std::vector<double> per_ray_depth;
    std::vector<double> per_ray_total;
    double empty_ray_fraction = 0;
};

/// Squared L2 over the 3 channels of one ray.
inline double photometric_loss(const Vec3& rendered, const Vec3& observed) {
    const Vec3 d = rendered - observed;
    return d.dot(d);
}

/// Ablation baseline: squared error against the scale-adjusted prior depth.
inline double l2_depth_loss(double rendered_depth, double prior_depth_scaled) {
    const double d = rendered_depth - prior_depth_scaled;
    return d * d;
}

/// Ablation baseline: single-hypothesis space-carving loss
/// (1/N) sum_k (y_k - z0)^2.
inline double l2_hypothesis_loss(const std::vector<double>& samples, double prior_atom) {
    if (samples.empty()) throw InputError("l2_hypothesis_loss: need samples");
    double s = 0;
    for (double y : samples) {
        const double d = y - prior_atom;
        s += d * d;
    }
    return s / double(samples.size());
}

/// Per-ray focal-style weights for the combined loss
///   L = (1+u)^gamma L_photo + lambda (1-u)^gamma L_depth.
struct RayLossWeights {
    double photo = 1;
    double depth = 0;
};

inline RayLossWeights ray_loss_weights(double u, const LossWeights& w, bool empty_ray) {
    if (!(u >= 0.0 && u <= 1.0)) throw InputError("ray weights: u outside [0,1]");
    RayLossWeights out;
    out.photo = std::pow(1.0 + u, w.gamma);
    out.depth = empty_ray ? 0.0 : w.lambda * std::pow(1.0 - u, w.gamma);
    return out;
}

/// Combine per-ray photometric and depth terms, then mean over the batch.
inline LossBreakdown total_loss(const std::vector<double>& photo,
                                const std::vector<double>& depth,
                                const std::vector<double>& u,
                                const LossWeights& weights,
                                const std::vector<bool>& empty_flags) {
    weights.validate();
    const auto n = photo.size();
    if (depth.size() != n || u.size() != n || empty_flags.size() != n)
        throw InputError("total_loss: length mismatch");
    if (n == 0) throw InputError("total_loss: empty batch");

    LossBreakdown out;
    out.per_ray_photo = photo;
    out.per_ray_depth.resize(n);
    out.per_ray_total.resize(n);
    std::size_t empties = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto w = ray_loss_weights(u[r], weights, empty_flags[r]);
        if (empty_flags[r]) ++empties;
        out.per_ray_depth[r] = empty_flags[r] ? 0.0 : depth[r];
        out.per_ray_total[r] = w.photo * photo[r] + w.depth * out.per_ray_depth[r];
        out.photo += photo[r];
        out.depth += out.per_ray_depth[r];
        out.total += out.per_ray_total[r];
    }
    out.photo /= double(n);
    out.depth /= double(n);
    out.total /= double(n);
    out.empty_ray_fraction = double(empties) / double(n);
    return out;
}

}  // namespace dgnerf
