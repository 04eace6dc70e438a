#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "dgnerf/pfm.hpp"
#include "dgnerf/png_io.hpp"
#include "dgnerf/scenesim.hpp"
#include "dgnerf/uncertainty.hpp"

namespace dgnerf {

// Dataset directory layout:
//   scene.json     manifest: spec, split, intrinsics, poses (row-major 4x4)
//   rgb/####.png   8-bit RGB
//   depth/####.pfm ground-truth ray distance
//   prior/####.pfm corrupted depth prior (train views)
//   uncert/####.pfm frozen uncertainty map (train views)
//   traj/####/     denoising trajectory; traj/####_mirror/ the paired run

namespace detail_ds {

inline std::string view_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return buf;
}

inline nlohmann::json pose_to_json(const Pose& p) {
    // camera-to-world, row-major 4x4; columns: right, up, forward, position
    return nlohmann::json::array({
        p.right.x, p.up.x, p.forward.x, p.position.x,
        p.right.y, p.up.y, p.forward.y, p.position.y,
        p.right.z, p.up.z, p.forward.z, p.position.z,
        0.0, 0.0, 0.0, 1.0});
}

inline Pose pose_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 16) throw DataError("scene.json: pose must be 16 floats");
    Pose p;
    p.right = {j[0], j[4], j[8]};
    p.up = {j[1], j[5], j[9]};
    p.forward = {j[2], j[6], j[10]};
    p.position = {j[3], j[7], j[11]};
    return p;
}

inline nlohmann::json vec_to_json(const Vec3& v) {
    return nlohmann::json::array({v.x, v.y, v.z});
}

inline Vec3 vec_from_json(const nlohmann::json& j) {
    return {j.at(0), j.at(1), j.at(2)};
}

}  // namespace detail_ds

inline void write_dataset(const std::string& dir, const SceneDataset& ds) {
    namespace fs = std::filesystem;
    using namespace detail_ds;
    fs::create_directories(dir + "/rgb");
    fs::create_directories(dir + "/depth");
    fs::create_directories(dir + "/prior");
    fs::create_directories(dir + "/uncert");
    fs::create_directories(dir + "/errmask");

    nlohmann::json manifest;
    manifest["units"] = "scene meters";
    auto& spec = manifest["spec"];
    spec["room_lo"] = vec_to_json(ds.spec.room_lo);
    spec["room_hi"] = vec_to_json(ds.spec.room_hi);
    spec["light_dir"] = vec_to_json(ds.spec.light_dir);
    spec["ambient"] = ds.spec.ambient;
    spec["checker_scale"] = ds.spec.checker_scale;
    spec["near"] = ds.spec.near;
    spec["far"] = ds.spec.far;
    spec["image_size"] = ds.spec.image_size;
    spec["n_train"] = ds.spec.n_train;
    spec["n_test"] = ds.spec.n_test;

    auto& views = manifest["views"];
    for (const auto& v : ds.views) {
        nlohmann::json jv;
        jv["id"] = v.id;
        jv["split"] = v.is_test ? "test" : "train";
        jv["pose"] = pose_to_json(v.pose);
        jv["intrinsics"] = {{"fx", v.intrinsics.fx}, {"fy", v.intrinsics.fy},
                            {"cx", v.intrinsics.cx}, {"cy", v.intrinsics.cy},
                            {"width", v.intrinsics.width}, {"height", v.intrinsics.height}};
        views.push_back(jv);

        const auto name = view_name(v.id);
        write_png(dir + "/rgb/" + name + ".png", v.rgb);
        write_pfm(dir + "/depth/" + name + ".pfm", v.depth);
        const auto& prior = ds.priors[v.id];
        if (prior.depth.size() > 0) {
            write_pfm(dir + "/prior/" + name + ".pfm", prior.depth);
            if (prior.uncertainty.size() > 0)
                write_pfm(dir + "/uncert/" + name + ".pfm", prior.uncertainty);
            if (prior.error_mask.size() > 0)
                write_pfm(dir + "/errmask/" + name + ".pfm", prior.error_mask);
        }
    }

    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto name = view_name(ds.trajectories[i].source_image_id);
        write_trajectory(dir + "/traj/" + name, ds.trajectories[i], false,
                         "../" + name + "_mirror");
        if (i < ds.mirrored_trajectories.size())
            write_trajectory(dir + "/traj/" + name + "_mirror",
                             ds.mirrored_trajectories[i], true, "../" + name);
    }

    std::ofstream out(dir + "/scene.json");
    if (!out) throw DataError("write_dataset: cannot open " + dir + "/scene.json");
    out << manifest.dump(2) << "\n";
}

inline SceneDataset read_dataset(const std::string& dir, bool load_trajectories = false) {
    namespace fs = std::filesystem;
    using namespace detail_ds;
    std::ifstream in(dir + "/scene.json");
    if (!in) throw DataError("read_dataset: missing scene.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("read_dataset: bad scene.json: ") + e.what());
    }

    SceneDataset ds;
    const auto& spec = manifest.at("spec");
    ds.spec.room_lo = vec_from_json(spec.at("room_lo"));
    ds.spec.room_hi = vec_from_json(spec.at("room_hi"));
    ds.spec.light_dir = vec_from_json(spec.at("light_dir"));
    ds.spec.ambient = spec.at("ambient");
    ds.spec.checker_scale = spec.at("checker_scale");
    ds.spec.near = spec.at("near");
    ds.spec.far = spec.at("far");
    ds.spec.image_size = spec.at("image_size");
    ds.spec.n_train = spec.at("n_train");
    ds.spec.n_test = spec.at("n_test");

    for (const auto& jv : manifest.at("views")) {
        SceneView v;
        v.id = jv.at("id");
        v.is_test = jv.at("split") == "test";
        v.pose = pose_from_json(jv.at("pose"));
        const auto& K = jv.at("intrinsics");
        v.intrinsics = {K.at("fx"), K.at("fy"), K.at("cx"), K.at("cy"),
                        K.at("width"), K.at("height")};
        const auto name = view_name(v.id);
        v.rgb = read_png(dir + "/rgb/" + name + ".png");
        v.depth = read_pfm(dir + "/depth/" + name + ".pfm");
        ds.views.push_back(std::move(v));
    }
    ds.priors.resize(ds.views.size());
    for (const auto& v : ds.views) {
        const auto name = view_name(v.id);
        const auto prior_path = dir + "/prior/" + name + ".pfm";
        if (fs::exists(prior_path)) {
            ds.priors[v.id].depth = read_pfm(prior_path);
            const auto uncert_path = dir + "/uncert/" + name + ".pfm";
            if (fs::exists(uncert_path))
                ds.priors[v.id].uncertainty = read_pfm(uncert_path);
            const auto mask_path = dir + "/errmask/" + name + ".pfm";
            if (fs::exists(mask_path))
                ds.priors[v.id].error_mask = read_pfm(mask_path);
        }
    }
    if (load_trajectories && fs::exists(dir + "/traj")) {
        for (const auto& v : ds.views) {
            const auto name = view_name(v.id);
            const auto tdir = dir + "/traj/" + name;
            if (fs::exists(tdir)) {
                ds.trajectories.push_back(read_trajectory(tdir));
                const auto mdir = tdir + "_mirror";
                if (fs::exists(mdir))
                    ds.mirrored_trajectories.push_back(read_trajectory(mdir));
            }
        }
    }
    return ds;
}

// A loader for real RGB-D scans would follow the same layout with
// externally produced priors and trajectories dropped into prior/,
// uncert/ and traj/. No such data ships with this repository.

}  // namespace dgnerf
