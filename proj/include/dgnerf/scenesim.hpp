#pragma once

#include <algorithm>
#include <numbers>
#include <optional>

#include "dgnerf/common.hpp"
#include "dgnerf/uncertainty.hpp"

namespace dgnerf {

struct Image {
    int height = 0, width = 0;
    std::vector<Vec3> pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(std::size_t(h) * w) {}
    Vec3& at(int r, int c) { return pixels[std::size_t(r) * width + c]; }
    const Vec3& at(int r, int c) const { return pixels[std::size_t(r) * width + c]; }
};

struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
};

/// Camera-to-world transform (orthonormal rotation + translation).
struct Pose {
    Vec3 right, up, forward;  // world-space camera axes (columns of R)
    Vec3 position;

    /// Ray through pixel center (r, c): camera looks along +forward,
    /// x right, y down.
    Vec3 ray_direction(const Intrinsics& K, double r, double c) const {
        const double x = (c + 0.5 - K.cx) / K.fx;
        const double y = (r + 0.5 - K.cy) / K.fy;
        return (right * x + up * (-y) + forward).normalized();
    }
};

inline Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up = {0, 1, 0}) {
    Pose p;
    p.position = eye;
    p.forward = (target - eye).normalized();
    p.right = p.forward.cross(world_up).normalized();
    p.up = p.right.cross(p.forward).normalized();
    return p;
}

// --- analytic primitives --------------------------------------------------

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal;
    Vec3 albedo;
};

struct Sphere {
    Vec3 center;
    double radius = 1;
    Vec3 albedo;
};

struct Box {  // axis-aligned
    Vec3 lo, hi;
    Vec3 albedo;
    bool hollow = false;  // room shell: hit from inside
};

struct Plane {
    Vec3 point, normal;
    Vec3 albedo;
};

inline std::optional<Hit> intersect(const Sphere& s, const Vec3& o, const Vec3& d) {
    const Vec3 oc = o - s.center;
    const double b = oc.dot(d);
    const double c = oc.dot(oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t < 1e-9) t = -b + sq;
    if (t < 1e-9) return std::nullopt;
    Hit h;
    h.t = t;
    h.normal = (o + d * t - s.center).normalized();
    h.albedo = s.albedo;
    return h;
}

inline std::optional<Hit> intersect(const Box& bx, const Vec3& o, const Vec3& d) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis_min = -1, axis_max = -1;
    for (int a = 0; a < 3; ++a) {
        const double lo = bx.lo[a], hi = bx.hi[a], oa = o[a], da = d[a];
        if (std::abs(da) < 1e-12) {
            if (oa < lo || oa > hi) return std::nullopt;
            continue;
        }
        double t0 = (lo - oa) / da, t1 = (hi - oa) / da;
        int ax = a;
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) { tmin = t0; axis_min = ax; }
        if (t1 < tmax) { tmax = t1; axis_max = ax; }
    }
    if (tmax < tmin) return std::nullopt;
    double t;
    int axis;
    if (bx.hollow) {
        t = tmax;
        axis = axis_max;
    } else {
        t = tmin > 1e-9 ? tmin : tmax;
        axis = tmin > 1e-9 ? axis_min : axis_max;
    }
    if (t < 1e-9 || axis < 0) return std::nullopt;
    Hit h;
    h.t = t;
    Vec3 p = o + d * t;
    Vec3 n{0, 0, 0};
    const double mid = 0.5 * (bx.lo[axis] + bx.hi[axis]);
    double sign = p[axis] > mid ? 1.0 : -1.0;
    if (bx.hollow) sign = -sign;  // inward-facing
    if (axis == 0) n.x = sign;
    else if (axis == 1) n.y = sign;
    else n.z = sign;
    h.normal = n;
    h.albedo = bx.albedo;
    return h;
}

inline std::optional<Hit> intersect(const Plane& pl, const Vec3& o, const Vec3& d) {
    const double denom = pl.normal.dot(d);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = pl.normal.dot(pl.point - o) / denom;
    if (t < 1e-9) return std::nullopt;
    Hit h;
    h.t = t;
    h.normal = denom < 0 ? pl.normal : pl.normal * -1.0;
    h.albedo = pl.albedo;
    return h;
}

// --- scene specification --------------------------------------------------

struct SceneSpec {
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
    std::vector<Plane> planes;
    Vec3 room_lo{-2, -2, -2}, room_hi{2, 2, 2};
    Vec3 light_dir{0.4, 1.0, 0.3};  // toward the light
    double ambient = 0.25;
    double checker_scale = 0.9;  // albedo modulation period, 0 disables
    int n_train = 18, n_test = 8;
    Vec3 camera_lookat{0, 0, 0};
    double camera_radius = 1.2;
    double camera_height = 0.3;
    int image_size = 64;
    double near = 0.05, far = 8.0;

    int primitive_count() const {
        return int(spheres.size() + boxes.size() + planes.size());
    }
};

/// A simple furnished-room default: hollow room box, two boxes and a
/// sphere inside, mildly textured walls.
inline SceneSpec default_scene_spec() {
    SceneSpec s;
    s.boxes.push_back({s.room_lo, s.room_hi, {0.75, 0.72, 0.68}, true});
    s.boxes.push_back({{-1.4, -2.0, -1.0}, {-0.6, -0.8, -0.2}, {0.70, 0.30, 0.25}, false});
    s.boxes.push_back({{0.5, -2.0, 0.4}, {1.3, -1.1, 1.2}, {0.25, 0.45, 0.70}, false});
    s.spheres.push_back({{0.2, -1.5, -0.9}, 0.5, {0.30, 0.65, 0.35}});
    return s;
}

struct SceneView {
    Image rgb;
    Grid depth;  // distance along the ray, scene units
    Pose pose;
    Intrinsics intrinsics;
    bool is_test = false;
    int id = 0;
};

struct DepthPrior {
    Grid depth;         // z_0 > 0
    Grid uncertainty;   // in [0,1]
    std::vector<Grid> hypotheses;  // optional stack, K >= 1 when present
    Grid error_mask;    // injected structured-error magnitude (synthetic provenance)
    std::string provenance;
};

struct SceneDataset {
    SceneSpec spec;
    std::vector<SceneView> views;
    std::vector<DepthPrior> priors;  // indexed like views; only train views filled
    std::vector<DenoisingTrajectory> trajectories;          // per train view
    std::vector<DenoisingTrajectory> mirrored_trajectories; // paired runs

    std::vector<int> train_ids() const {
        std::vector<int> ids;
        for (const auto& v : views)
            if (!v.is_test) ids.push_back(v.id);
        return ids;
    }
    std::vector<int> test_ids() const {
        std::vector<int> ids;
        for (const auto& v : views)
            if (v.is_test) ids.push_back(v.id);
        return ids;
    }
};

inline std::optional<Hit> trace(const SceneSpec& spec, const Vec3& o, const Vec3& d) {
    std::optional<Hit> best;
    auto consider = [&](const std::optional<Hit>& h) {
        if (h && (!best || h->t < best->t)) best = h;
    };
    for (const auto& p : spec.spheres) consider(intersect(p, o, d));
    for (const auto& p : spec.boxes) consider(intersect(p, o, d));
    for (const auto& p : spec.planes) consider(intersect(p, o, d));
    return best;
}

/// One-bounce Lambertian shading with a checker albedo modulation.
inline Vec3 shade(const SceneSpec& spec, const Hit& h, const Vec3& point) {
    double mod = 1.0;
    if (spec.checker_scale > 0) {
        const double s = spec.checker_scale;
        const int k = int(std::floor(point.x / s)) + int(std::floor(point.y / s)) +
                      int(std::floor(point.z / s));
        mod = (k % 2 == 0) ? 1.0 : 0.72;
    }
    const Vec3 l = spec.light_dir.normalized();
    const double diff = std::max(0.0, h.normal.dot(l));
    const double shade = spec.ambient + (1.0 - spec.ambient) * diff;
    Vec3 c = h.albedo * (mod * shade);
    return {std::clamp(c.x, 0.0, 1.0), std::clamp(c.y, 0.0, 1.0), std::clamp(c.z, 0.0, 1.0)};
}

inline Intrinsics default_intrinsics(int size) {
    Intrinsics K;
    K.width = K.height = size;
    K.fx = K.fy = 0.7 * size;  // ~71 degree FoV
    K.cx = K.cy = size / 2.0;
    return K;
}

/// Render posed RGB-D views by exact ray-primitive intersection.
inline SceneDataset make_scene(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.primitive_count() < 1) throw DataError("make_scene: no primitives");
    Rng rng(seed);
    SceneDataset ds;
    ds.spec = spec;
    const int n_views = spec.n_train + spec.n_test;
    const Intrinsics K = default_intrinsics(spec.image_size);

    for (int v = 0; v < n_views; ++v) {
        const double angle = 2.0 * std::numbers::pi * v / n_views;
        Vec3 eye = spec.camera_lookat +
                   Vec3{spec.camera_radius * std::cos(angle), spec.camera_height,
                        spec.camera_radius * std::sin(angle)};
        for (int a = 0; a < 3; ++a)
            if (eye[a] <= spec.room_lo[a] || eye[a] >= spec.room_hi[a])
                throw DataError("make_scene: camera outside room bounds");

        SceneView view;
        view.id = v;
        view.pose = look_at(eye, spec.camera_lookat);
        view.intrinsics = K;
        view.rgb = Image(K.height, K.width);
        view.depth = Grid(K.height, K.width);
        for (int r = 0; r < K.height; ++r) {
            for (int c = 0; c < K.width; ++c) {
                const Vec3 dir = view.pose.ray_direction(K, r, c);
                auto h = trace(spec, eye, dir);
                if (!h) throw DataError("make_scene: ray escaped the scene");
                view.rgb.at(r, c) = shade(spec, *h, eye + dir * h->t);
                view.depth.at(r, c) = h->t;
            }
        }
        ds.views.push_back(std::move(view));
    }

    // test views spread evenly around the orbit
    for (int k = 0; k < spec.n_test; ++k) {
        const int idx = int(std::llround((k + 0.5) * n_views / double(spec.n_test)));
        ds.views[std::min(idx, n_views - 1)].is_test = true;
    }
    ds.priors.resize(n_views);
    return ds;
}

// --- prior corruption -----------------------------------------------------

struct BlobSpec {
    double center_row = 0, center_col = 0;  // pixel units
    double radius = 8;
    double depth_offset = 0.4;
};

struct CorruptionSpec {
    double scale = 1.0;                  // global factor (drawn per view when randomized)
    double scale_jitter = 0.0;           // draw scale from [scale - j, scale + j]
    double warp_amplitude = 0.0;         // low-frequency additive warp, scene units
    double warp_wavelength = 32.0;       // pixels
    int n_blobs = 0;
    double blob_radius = 9.0;
    double blob_offset = 0.45;
    double noise_sigma = 0.0;
};

/// Default corruption: scale-ambiguous, low-frequency warp, structured
/// blob errors, mild noise. Calibrated so the mean-aligned prior AbsRel
/// lands near 0.10.
inline CorruptionSpec default_corruption_spec() {
    CorruptionSpec c;
    c.scale = 1.0;
    c.scale_jitter = 0.15;
    c.warp_amplitude = 0.10;
    c.warp_wavelength = 40.0;
    c.n_blobs = 2;
    c.blob_radius = 10.0;
    c.blob_offset = 0.55;
    c.noise_sigma = 0.01;
    return c;
}

/// Concrete draw of a corruption: one instance per denoising run. A
/// mirrored-run instance shares the global scale and warp phases (the
/// model's consistent biases) but re-draws the blob magnitudes at
/// mirrored positions (unstable misreadings of the same geometry).
struct CorruptionInstance {
    double scale = 1.0;
    double phase_r = 0, phase_c = 0;
    std::vector<BlobSpec> blobs;
};

inline CorruptionInstance draw_corruption(const CorruptionSpec& spec, int height, int width,
                                          Rng& rng) {
    CorruptionInstance inst;
    inst.scale = spec.scale_jitter > 0
                     ? rng.uniform(spec.scale - spec.scale_jitter, spec.scale + spec.scale_jitter)
                     : spec.scale;
    inst.phase_r = rng.uniform(0, 2 * std::numbers::pi);
    inst.phase_c = rng.uniform(0, 2 * std::numbers::pi);
    for (int k = 0; k < spec.n_blobs; ++k) {
        BlobSpec b;
        b.center_row = rng.uniform(0.15, 0.85) * height;
        b.center_col = rng.uniform(0.15, 0.85) * width;
        b.radius = spec.blob_radius * rng.uniform(0.8, 1.2);
        b.depth_offset = (rng.uniform() < 0.5 ? -1.0 : 1.0) * spec.blob_offset *
                         rng.uniform(0.8, 1.2);
        inst.blobs.push_back(b);
    }
    return inst;
}

inline CorruptionInstance mirror_corruption(const CorruptionInstance& inst, int width,
                                            double blob_offset_scale, Rng& rng) {
    CorruptionInstance m = inst;
    for (auto& b : m.blobs) {
        b.center_col = width - 1 - b.center_col;
        b.depth_offset = (rng.uniform() < 0.5 ? -1.0 : 1.0) * blob_offset_scale *
                         rng.uniform(0.8, 1.2);
    }
    return m;
}

inline DepthPrior apply_corruption(const Grid& gt_depth, const CorruptionSpec& spec,
                                   const CorruptionInstance& inst, Rng& noise_rng) {
    for (double v : gt_depth.data)
        if (!(v > 0)) throw DataError("corrupt_prior: nonpositive gt depth");
    DepthPrior prior;
    prior.provenance = "synthetic-corruption";
    prior.depth = gt_depth;
    prior.error_mask = Grid(gt_depth.height, gt_depth.width);

    for (int r = 0; r < gt_depth.height; ++r) {
        for (int c = 0; c < gt_depth.width; ++c) {
            double d = gt_depth.at(r, c) * inst.scale;
            if (spec.warp_amplitude > 0) {
                d += spec.warp_amplitude *
                     std::sin(2 * std::numbers::pi * r / spec.warp_wavelength + inst.phase_r) *
                     std::sin(2 * std::numbers::pi * c / spec.warp_wavelength + inst.phase_c);
            }
            double blob_err = 0;
            for (const auto& b : inst.blobs) {
                const double dr = r - b.center_row, dc = c - b.center_col;
                if (dr * dr + dc * dc <= b.radius * b.radius)
                    blob_err += b.depth_offset;
            }
            d += blob_err;
            if (spec.noise_sigma > 0) d += spec.noise_sigma * noise_rng.normal();
            if (d <= 0) throw DataError("corrupt_prior: corruption drove depth nonpositive");
            prior.depth.at(r, c) = d;
            prior.error_mask.at(r, c) = std::abs(blob_err);
        }
    }
    return prior;
}

/// Corrupt a ground-truth depth map into a synthetic monocular prior.
inline DepthPrior corrupt_prior(const Grid& gt_depth, const CorruptionSpec& spec,
                                std::uint64_t seed) {
    Rng rng(seed);
    auto inst = draw_corruption(spec, gt_depth.height, gt_depth.width, rng);
    return apply_corruption(gt_depth, spec, inst, rng);
}

/// Synthetic denoising trajectory: pixels with larger injected error are
/// updated more often. steps[0] equals the prior depth exactly.
inline DenoisingTrajectory synth_trajectory(const DepthPrior& prior, const Grid& error_mask,
                                            int T, std::uint64_t seed, double tau) {
    if (T < 2) throw InputError("synth_trajectory: T >= 2");
    Rng rng(seed);
    const int H = prior.depth.height, W = prior.depth.width;
    DenoisingTrajectory traj;
    traj.steps.assign(std::size_t(T) + 1, Grid(H, W));
    traj.steps[0] = prior.depth;

    double max_err = 0;
    for (double e : error_mask.data) max_err = std::max(max_err, e);

    for (std::size_t i = 0; i < prior.depth.size(); ++i) {
        Rng px = rng.split(i);
        const double err = error_mask.data[i];
        // update rate grows with local injected error; saturates at the
        // 70th percentile of the range so peak-error pixels flip every step
        const double rate = max_err > 0 ? std::min(err / (0.7 * max_err), 1.0) : 0.0;
        double value = prior.depth.data[i];
        for (int t = 1; t <= T; ++t) {
            if (px.uniform() < rate)
                value += (px.uniform() < 0.5 ? -1.0 : 1.0) * tau * px.uniform(4.0, 12.0);
            traj.steps[t].data[i] = value;
        }
    }
    return traj;
}

/// Mean-ratio-aligned absolute error |s * prior - gt| per pixel.
inline Grid aligned_error_map(const Grid& gt, const Grid& prior) {
    double mg = 0, mp = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        mg += gt.data[i];
        mp += prior.data[i];
    }
    const double s = mp > 0 ? mg / mp : 1.0;
    Grid err(gt.height, gt.width);
    for (std::size_t i = 0; i < gt.size(); ++i)
        err.data[i] = std::abs(s * prior.data[i] - gt.data[i]);
    return err;
}

/// Full synthetic supervision: posed RGB-D, corrupted priors (one
/// global scale per scene), paired denoising trajectories, and frozen
/// uncertainty maps on every training view.
inline SceneDataset build_benchmark_dataset(const SceneSpec& spec,
                                            const CorruptionSpec& corruption,
                                            int trajectory_steps, std::uint64_t seed) {
    SceneDataset ds = make_scene(spec, seed);
    Rng root = Rng(seed).split(0xDA7A);

    CorruptionSpec cs = corruption;
    if (cs.scale_jitter > 0) {
        cs.scale = root.uniform(cs.scale - cs.scale_jitter, cs.scale + cs.scale_jitter);
        cs.scale_jitter = 0;
    }
    const double tau = default_tau(spec.far, spec.near);

    for (const auto& v : ds.views) {
        if (v.is_test) continue;
        Rng vrng = root.split(1000 + std::uint64_t(v.id));
        auto inst = draw_corruption(cs, v.depth.height, v.depth.width, vrng);
        DepthPrior prior = apply_corruption(v.depth, cs, inst, vrng);

        const Grid gt_m = v.depth.mirrored();
        auto minst = mirror_corruption(inst, v.depth.width, cs.blob_offset, vrng);
        DepthPrior prior_m = apply_corruption(gt_m, cs, minst, vrng);

        const Grid err = aligned_error_map(v.depth, prior.depth);
        const Grid err_m = aligned_error_map(gt_m, prior_m.depth);
        auto traj = synth_trajectory(prior, err, trajectory_steps, vrng.next_u64(), tau);
        auto traj_m = synth_trajectory(prior_m, err_m, trajectory_steps, vrng.next_u64(), tau);
        traj.source_image_id = v.id;
        traj_m.source_image_id = v.id;

        prior.uncertainty = compute_uncertainty(traj, traj_m, tau).values;
        ds.priors[v.id] = std::move(prior);
        ds.trajectories.push_back(std::move(traj));
        ds.mirrored_trajectories.push_back(std::move(traj_m));
    }
    return ds;
}

}  // namespace dgnerf
