#pragma once

#include "dgnerf/common.hpp"

namespace dgnerf {

struct DepthMetrics {
    double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
    double valid_pixel_fraction = 0;
};

/// Standard monocular-depth metrics over the valid mask:
///   RMSE     = sqrt(mean (d - d^)^2)
///   RMSE log = sqrt(mean (ln d - ln d^)^2)
///   AbsRel   = mean |d - d^| / d
///   SqRel    = mean (d - d^)^2 / d
inline DepthMetrics depth_metrics(const Grid& gt, const Grid& pred, const Grid& valid_mask) {
    if (!gt.same_shape(pred) || !gt.same_shape(valid_mask))
        throw InputError("depth_metrics: shape mismatch");
    DepthMetrics m;
    std::size_t k = 0;
    bool log_ok = true;
    double se = 0, se_log = 0, ar = 0, sr = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (valid_mask.data[i] <= 0) continue;
        const double d = gt.data[i], p = pred.data[i];
        if (!(d > 0)) throw InputError("depth_metrics: nonpositive gt under mask");
        const double e = d - p;
        se += e * e;
        ar += std::abs(e) / d;
        sr += e * e / d;
        if (p > 0) {
            const double el = std::log(d) - std::log(p);
            se_log += el * el;
        } else {
            log_ok = false;
        }
        ++k;
    }
    if (k == 0) throw InputError("depth_metrics: empty valid mask");
    m.rmse = std::sqrt(se / double(k));
    m.abs_rel = ar / double(k);
    m.sq_rel = sr / double(k);
    if (!log_ok) throw NumericalError("depth_metrics: nonpositive prediction under mask (rmse_log)");
    m.rmse_log = std::sqrt(se_log / double(k));
    m.valid_pixel_fraction = double(k) / double(gt.size());
    return m;
}

constexpr double kPsnrCap = 99.0;  // sentinel for identical images

/// 10 log10(1 / MSE) for [0,1] images; identical images report the cap.
inline double psnr(const std::vector<Vec3>& rendered, const std::vector<Vec3>& gt) {
    if (rendered.size() != gt.size() || rendered.empty())
        throw InputError("psnr: shape mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const Vec3 d = rendered[i] - gt[i];
        mse += d.dot(d);
    }
    mse /= double(3 * rendered.size());
    if (mse <= 0) return kPsnrCap;
    return std::min(10.0 * std::log10(1.0 / mse), kPsnrCap);
}

/// Mean-depth ratio, used only for prior-quality evaluation.
inline double align_scale_mean(const Grid& gt, const Grid& pred) {
    if (!gt.same_shape(pred)) throw InputError("align_scale_mean: shape mismatch");
    double mg = 0, mp = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        mg += gt.data[i];
        mp += pred.data[i];
    }
    if (!(mg > 0) || !(mp > 0)) throw InputError("align_scale_mean: nonpositive mean");
    return mg / mp;
}

struct MetricsReport {
    DepthMetrics depth;   // mean over images
    double psnr = 0;      // mean over images
    std::vector<DepthMetrics> per_image_depth;
    std::vector<double> per_image_psnr;
};

}  // namespace dgnerf
