#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "dgnerf/config.hpp"
#include "dgnerf/dataset_io.hpp"
#include "dgnerf/field.hpp"
#include "dgnerf/metrics.hpp"

namespace dgnerf {

inline Grid positive_mask(const Grid& gt) {
    Grid mask(gt.height, gt.width);
    for (std::size_t i = 0; i < gt.size(); ++i) mask.data[i] = gt.data[i] > 0 ? 1.0 : 0.0;
    return mask;
}

/// Render the selected views and score them against ground truth.
inline MetricsReport evaluate_views(const FieldMlp& coarse, const FieldMlp& fine,
                                    const SceneDataset& ds, const TrainConfig& cfg,
                                    const std::vector<int>& view_ids,
                                    std::vector<ViewRender>* renders = nullptr) {
    MetricsReport report;
    for (int vid : view_ids) {
        const auto& view = ds.views[vid];
        auto render = render_view(coarse, fine, view.pose, view.intrinsics,
                                  ds.spec.near, ds.spec.far, cfg, std::uint64_t(vid));
        auto dm = depth_metrics(view.depth, render.depth, positive_mask(view.depth));
        report.per_image_depth.push_back(dm);
        report.per_image_psnr.push_back(psnr(render.rgb.pixels, view.rgb.pixels));
        if (renders) renders->push_back(std::move(render));
    }
    const double n = double(report.per_image_depth.size());
    for (std::size_t i = 0; i < report.per_image_depth.size(); ++i) {
        report.depth.abs_rel += report.per_image_depth[i].abs_rel / n;
        report.depth.sq_rel += report.per_image_depth[i].sq_rel / n;
        report.depth.rmse += report.per_image_depth[i].rmse / n;
        report.depth.rmse_log += report.per_image_depth[i].rmse_log / n;
        report.psnr += report.per_image_psnr[i] / n;
    }
    return report;
}

inline void write_metrics_report(const std::string& out_dir, const MetricsReport& report,
                                 const std::vector<int>& view_ids) {
    std::ofstream csv(out_dir + "/metrics.csv");
    if (!csv) throw DataError("write_metrics_report: cannot open " + out_dir + "/metrics.csv");
    csv << "view,abs_rel,sq_rel,rmse,rmse_log,psnr\n";
    char buf[256];
    for (std::size_t i = 0; i < view_ids.size(); ++i) {
        const auto& d = report.per_image_depth[i];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", view_ids[i],
                      d.abs_rel, d.sq_rel, d.rmse, d.rmse_log, report.per_image_psnr[i]);
        csv << buf;
    }
    nlohmann::json summary;
    summary["abs_rel"] = report.depth.abs_rel;
    summary["sq_rel"] = report.depth.sq_rel;
    summary["rmse"] = report.depth.rmse;
    summary["rmse_log"] = report.depth.rmse_log;
    summary["psnr"] = report.psnr;
    summary["n_views"] = view_ids.size();
    std::ofstream js(out_dir + "/metrics.json");
    js << summary.dump(2) << "\n";
}

struct RunResult {
    TrainResult trained;
    MetricsReport test_metrics;
};

/// Train on a dataset and write manifest, checkpoint, loss log and
/// test-view metrics into out_dir.
inline RunResult run_training_job(const SceneDataset& ds, const TrainConfig& cfg,
                                  const Config& config_snapshot,
                                  const std::string& dataset_path,
                                  const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    RunResult result;
    result.trained = train(cfg, ds, out_dir + "/checkpoint.ckpt");
    auto ckpt = make_checkpoint(result.trained.coarse, result.trained.fine,
                                result.trained.prior_scale, cfg.steps, config_hash(cfg));
    save_checkpoint(out_dir + "/checkpoint.ckpt", ckpt);
    write_loss_log(out_dir + "/loss_log.csv", result.trained.log);

    result.test_metrics = evaluate_views(result.trained.coarse, result.trained.fine, ds, cfg,
                                         ds.test_ids());
    write_metrics_report(out_dir, result.test_metrics, ds.test_ids());

    const auto t1 = std::chrono::steady_clock::now();
    nlohmann::json manifest;
    manifest["version"] = "dgnerf-1.0";
    manifest["seed"] = cfg.seed;
    manifest["dataset"] = dataset_path;
    manifest["config"] = config_snapshot.entries();
    manifest["config_hash"] = config_hash(cfg);
    manifest["outputs"] = {out_dir + "/checkpoint.ckpt", out_dir + "/loss_log.csv",
                           out_dir + "/metrics.csv", out_dir + "/metrics.json"};
    manifest["elapsed_seconds"] =
        std::chrono::duration<double>(t1 - t0).count();
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    return result;
}

}  // namespace dgnerf
