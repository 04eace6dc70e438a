#pragma once

#include <algorithm>

#include "dgnerf/raymarch.hpp"

namespace dgnerf {

/// Piecewise-constant PDF over ray termination distance, with its CDF.
/// Bin edges are midpoints between adjacent quadrature distances,
/// extended to near/far at the ends.
struct TerminationDistribution {
    std::vector<double> edges;  // l+1 ascending
    std::vector<double> probs;  // l, nonnegative, sums to 1
    std::vector<double> cdf;    // l+1, cdf[0]=0, cdf[l]=1
    bool empty_ray = false;     // total weight below epsilon; probs are the uniform fallback
};

struct NormalizedWeights {
    std::vector<double> probs;
    double total = 0;
    bool empty_ray = false;
};

inline NormalizedWeights normalize_weights(const std::vector<double>& weights,
                                           double epsilon = 1e-8) {
    bool any_finite = false;
    double total = 0;
    for (double w : weights) {
        if (std::isfinite(w)) any_finite = true;
        total += w;
    }
    if (!any_finite || weights.empty())
        throw InputError("normalize_weights: no finite weights");
    NormalizedWeights out;
    out.total = total;
    out.probs.resize(weights.size());
    if (total < epsilon) {
        std::fill(out.probs.begin(), out.probs.end(), 1.0 / double(weights.size()));
        out.empty_ray = true;
    } else {
        for (std::size_t i = 0; i < weights.size(); ++i) out.probs[i] = weights[i] / total;
    }
    return out;
}

/// Reverse pass of normalize_weights: dL/dw_i = (dL/dp_i - sum_j dL/dp_j p_j) / total.
inline std::vector<double> normalize_weights_backward(const NormalizedWeights& fwd,
                                                      const std::vector<double>& dL_dprobs) {
    std::vector<double> dw(fwd.probs.size(), 0.0);
    if (fwd.empty_ray) return dw;  // fallback branch carries no gradient
    double dot = 0;
    for (std::size_t j = 0; j < fwd.probs.size(); ++j) dot += dL_dprobs[j] * fwd.probs[j];
    for (std::size_t i = 0; i < fwd.probs.size(); ++i)
        dw[i] = (dL_dprobs[i] - dot) / fwd.total;
    return dw;
}

inline std::vector<double> midpoint_edges(const std::vector<double>& distances,
                                          double near, double far) {
    const auto n = distances.size();
    for (std::size_t i = 1; i < n; ++i)
        if (!(distances[i] > distances[i - 1]))
            throw InputError("midpoint_edges: distances not strictly increasing");
    std::vector<double> edges(n + 1);
    edges[0] = near;
    for (std::size_t i = 1; i < n; ++i) edges[i] = 0.5 * (distances[i - 1] + distances[i]);
    edges[n] = far;
    return edges;
}

inline TerminationDistribution build_distribution(const NormalizedWeights& nw,
                                                  const RaySegments& seg,
                                                  double near, double far) {
    TerminationDistribution dist;
    dist.edges = midpoint_edges(seg.distances, near, far);
    dist.probs = nw.probs;
    dist.empty_ray = nw.empty_ray;
    dist.cdf.resize(dist.probs.size() + 1);
    dist.cdf[0] = 0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i)
        dist.cdf[i + 1] = dist.cdf[i] + dist.probs[i];
    dist.cdf.back() = 1.0;  // absorb rounding
    return dist;
}

inline TerminationDistribution build_distribution(std::vector<double> probs,
                                                  std::vector<double> edges,
                                                  bool empty_ray = false) {
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw InputError("build_distribution: edges not increasing");
    TerminationDistribution dist;
    dist.edges = std::move(edges);
    dist.probs = std::move(probs);
    dist.empty_ray = empty_ray;
    dist.cdf.resize(dist.probs.size() + 1);
    dist.cdf[0] = 0;
    for (std::size_t i = 0; i < dist.probs.size(); ++i)
        dist.cdf[i + 1] = dist.cdf[i] + dist.probs[i];
    dist.cdf.back() = 1.0;
    return dist;
}

struct InverseSamples {
    std::vector<double> values;
    std::vector<int> bins;  // bin index each sample landed in
    bool empty_ray = false;
};

/// CDF^{-1}(q) by linear interpolation within the located bin. The
/// samples are differentiable w.r.t. probs with quantiles held fixed.
inline InverseSamples inverse_transform_sample(const TerminationDistribution& dist,
                                               const std::vector<double>& quantiles) {
    InverseSamples out;
    out.empty_ray = dist.empty_ray;
    out.values.resize(quantiles.size());
    out.bins.resize(quantiles.size());
    const auto l = dist.probs.size();
    for (std::size_t k = 0; k < quantiles.size(); ++k) {
        const double q = quantiles[k];
        if (!(q >= 0.0) || !(q < 1.0))
            throw InputError("inverse_transform_sample: quantile outside [0,1)");
        // first bin whose upper cdf exceeds q, skipping zero-mass bins
        auto it = std::upper_bound(dist.cdf.begin() + 1, dist.cdf.end(), q);
        std::size_t i = std::min<std::size_t>(it - dist.cdf.begin() - 1, l - 1);
        while (i + 1 < l && dist.probs[i] <= 0) ++i;
        const double w = dist.probs[i];
        const double lo = dist.edges[i], hi = dist.edges[i + 1];
        const double frac = w > 0 ? (q - dist.cdf[i]) / w : 0.0;
        out.values[k] = lo + std::clamp(frac, 0.0, 1.0) * (hi - lo);
        out.bins[k] = int(i);
    }
    return out;
}

/// Reverse pass: dL/dprobs from dL/dsample through the interpolated
/// inverse CDF (quantiles fixed).
///   y_k = e_i + (q_k - cdf_i) / p_i * (e_{i+1} - e_i)
///   dy/dcdf_i = -(e_{i+1}-e_i)/p_i ;  dy/dp_i -= frac*(e_{i+1}-e_i)/p_i
///   cdf_i = sum_{j<i} p_j
inline std::vector<double> inverse_transform_sample_backward(
    const TerminationDistribution& dist, const std::vector<double>& quantiles,
    const InverseSamples& samples, const std::vector<double>& dL_dy) {
    std::vector<double> dprobs(dist.probs.size(), 0.0);
    if (dist.empty_ray) return dprobs;
    std::vector<double> dcdf(dist.probs.size(), 0.0);  // w.r.t. cdf[i] (lower edge of bin i)
    for (std::size_t k = 0; k < quantiles.size(); ++k) {
        const int i = samples.bins[k];
        const double p = dist.probs[i];
        if (p <= 0) continue;
        const double span = dist.edges[i + 1] - dist.edges[i];
        const double frac = (quantiles[k] - dist.cdf[i]) / p;
        dcdf[i] += dL_dy[k] * (-span / p);
        dprobs[i] += dL_dy[k] * (-frac * span / p);
    }
    // cdf[i] depends on probs[j] for j < i: prefix-sum transpose
    double acc = 0;
    for (std::size_t i = dprobs.size(); i-- > 0;) {
        dprobs[i] += acc;
        acc += dcdf[i];
    }
    return dprobs;
}

/// Stratified quantiles (k + rand)/n; lower-variance distribution estimates.
inline std::vector<double> stratified_quantiles(int n, Rng& rng) {
    std::vector<double> q(n);
    for (int k = 0; k < n; ++k)
        q[k] = std::min((k + rng.uniform()) / double(n), std::nextafter(1.0, 0.0));
    return q;
}

/// Hierarchical resampling: union of the coarse distances and n_fine
/// inverse-transform draws, sorted ascending.
inline RaySegments fine_resample(const TerminationDistribution& coarse,
                                 const RaySegments& coarse_seg,
                                 int n_fine, double far, Rng& rng) {
    if (n_fine < 0) throw InputError("fine_resample: n_fine >= 0");
    RaySegments out;
    out.distances = coarse_seg.distances;
    if (n_fine > 0) {
        auto q = stratified_quantiles(n_fine, rng);
        auto s = inverse_transform_sample(coarse, q);
        out.distances.insert(out.distances.end(), s.values.begin(), s.values.end());
    }
    std::sort(out.distances.begin(), out.distances.end());
    // strictly increasing for downstream binning
    for (std::size_t i = 1; i < out.distances.size(); ++i)
        if (out.distances[i] <= out.distances[i - 1])
            out.distances[i] = std::nextafter(out.distances[i - 1], far * 2);
    finalize_deltas(out, far);
    return out;
}

}  // namespace dgnerf
