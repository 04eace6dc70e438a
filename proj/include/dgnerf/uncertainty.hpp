#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgnerf/common.hpp"
#include "dgnerf/pfm.hpp"

namespace dgnerf {

/// Stacked intermediate depth predictions of a denoising run.
/// steps[0] is the final estimate z_0, steps[T] the initial z_T.
struct DenoisingTrajectory {
    std::vector<Grid> steps;
    int source_image_id = -1;

    int transitions() const { return int(steps.size()) - 1; }

    void validate() const {
        if (steps.size() < 2)
            throw InputError("DenoisingTrajectory: need at least 2 steps");
        for (const auto& s : steps) {
            if (!s.same_shape(steps[0]))
                throw InputError("DenoisingTrajectory: step shape mismatch");
            for (double v : s.data)
                if (!std::isfinite(v))
                    throw InputError("DenoisingTrajectory: non-finite depth");
        }
    }
};

struct UncertaintyMap {
    Grid values;  // in [0,1]
    Grid raw;     // pre-normalization
    double tau_used = 0;
};

/// tau = (max_depth - min_depth) * 1e-4
inline double default_tau(double max_depth, double min_depth) {
    if (!(max_depth > min_depth))
        throw InputError("default_tau: max_depth must exceed min_depth");
    return (max_depth - min_depth) * 0.0001;
}

/// Per-pixel fraction of consecutive denoising steps whose change
/// meets the threshold: c = (1/T) sum_t 1[|z_t - z_{t-1}| >= tau].
inline Grid change_count(const DenoisingTrajectory& traj, double tau) {
    traj.validate();
    if (!(tau > 0)) throw InputError("change_count: tau > 0");
    const int T = traj.transitions();
    Grid count(traj.steps[0].height, traj.steps[0].width);
    for (int t = 1; t <= T; ++t) {
        const Grid& cur = traj.steps[t];
        const Grid& prev = traj.steps[t - 1];
        for (std::size_t i = 0; i < count.size(); ++i)
            if (std::abs(cur.data[i] - prev.data[i]) >= tau) count.data[i] += 1.0;
    }
    for (double& v : count.data) v /= T;
    return count;
}

/// U = (c(z|I) + M(c(z|M(I)))) / 2, where M is a horizontal flip and
/// mirrored_traj came from the mirrored input image.
inline Grid mirrored_count(const DenoisingTrajectory& traj,
                           const DenoisingTrajectory& mirrored_traj, double tau) {
    Grid c = change_count(traj, tau);
    Grid cm = change_count(mirrored_traj, tau);
    if (!c.same_shape(cm)) throw InputError("mirrored_count: shape mismatch");
    Grid cm_back = cm.mirrored();
    for (std::size_t i = 0; i < c.size(); ++i)
        c.data[i] = 0.5 * (c.data[i] + cm_back.data[i]);
    return c;
}

/// Per-pixel |z_0|I - M(z_0|M(I))|.
inline Grid flip_consistency(const Grid& z0, const Grid& z0_mirrored) {
    if (!z0.same_shape(z0_mirrored)) throw InputError("flip_consistency: shape mismatch");
    Grid back = z0_mirrored.mirrored();
    Grid out(z0.height, z0.width);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::abs(z0.data[i] - back.data[i]);
    return out;
}

/// u = U * flip, normalized to [0,1] by the per-image maximum.
inline UncertaintyMap uncertainty_map(const Grid& U, const Grid& flip) {
    if (!U.same_shape(flip)) throw InputError("uncertainty_map: shape mismatch");
    UncertaintyMap out;
    out.raw = Grid(U.height, U.width);
    double max_raw = 0;
    for (std::size_t i = 0; i < U.size(); ++i) {
        if (U.data[i] < 0 || flip.data[i] < 0)
            throw InputError("uncertainty_map: negative input");
        out.raw.data[i] = U.data[i] * flip.data[i];
        max_raw = std::max(max_raw, out.raw.data[i]);
    }
    out.values = out.raw;
    if (max_raw > 0)
        for (double& v : out.values.data) v /= max_raw;
    return out;
}

/// Full pipeline for one image given both denoising runs.
inline UncertaintyMap compute_uncertainty(const DenoisingTrajectory& traj,
                                          const DenoisingTrajectory& mirrored_traj,
                                          double tau) {
    Grid U = mirrored_count(traj, mirrored_traj, tau);
    Grid flip = flip_consistency(traj.steps[0], mirrored_traj.steps[0]);
    UncertaintyMap out = uncertainty_map(U, flip);
    out.tau_used = tau;
    return out;
}

// --- trajectory ingestion -------------------------------------------------
//
// A trajectory directory holds ordered depth maps step_0000.pfm (= z_0)
// .. step_TTTT.pfm plus manifest.txt:
//   image_id <id>
//   steps <T+1>
//   mirrored <0|1>
//   pair <relative path of the mirrored-run directory>

struct TrajectoryManifest {
    int image_id = -1;
    int steps = 0;
    bool mirrored = false;
    std::string pair_dir;
};

inline TrajectoryManifest read_trajectory_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.txt");
    if (!in) throw DataError("trajectory manifest missing in " + dir);
    TrajectoryManifest m;
    std::string key;
    while (in >> key) {
        if (key == "image_id") in >> m.image_id;
        else if (key == "steps") in >> m.steps;
        else if (key == "mirrored") { int v; in >> v; m.mirrored = v != 0; }
        else if (key == "pair") in >> m.pair_dir;
        else { std::string skip; std::getline(in, skip); }
    }
    if (m.steps < 2) throw DataError("trajectory manifest: bad step count in " + dir);
    return m;
}

inline std::string step_filename(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%04d.pfm", t);
    return buf;
}

inline DenoisingTrajectory read_trajectory(const std::string& dir) {
    auto manifest = read_trajectory_manifest(dir);
    DenoisingTrajectory traj;
    traj.source_image_id = manifest.image_id;
    traj.steps.reserve(manifest.steps);
    for (int t = 0; t < manifest.steps; ++t)
        traj.steps.push_back(read_pfm(dir + "/" + step_filename(t)));
    traj.validate();
    return traj;
}

inline void write_trajectory(const std::string& dir, const DenoisingTrajectory& traj,
                             bool mirrored, const std::string& pair_dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < traj.steps.size(); ++t)
        write_pfm(dir + "/" + step_filename(int(t)), traj.steps[t]);
    std::ofstream out(dir + "/manifest.txt");
    out << "image_id " << traj.source_image_id << "\n"
        << "steps " << traj.steps.size() << "\n"
        << "mirrored " << (mirrored ? 1 : 0) << "\n"
        << "pair " << pair_dir << "\n";
}

}  // namespace dgnerf
