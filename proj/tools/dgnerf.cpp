// Command-line surface for the depth-guided NeRF pipeline: scene
// generation, training, evaluation, uncertainty maps and the ablation
// grid. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dgnerf/config.hpp"
#include "dgnerf/dataset_io.hpp"
#include "dgnerf/runner.hpp"

namespace fs = std::filesystem;
using namespace dgnerf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

Config load_config(const std::string& path, std::uint64_t seed_override, bool seed_given) {
    Config cfg = path.empty() ? Config() : Config::from_file(path);
    if (seed_given) cfg.set("seed", std::to_string(seed_override));
    if (!cfg.has("seed"))
        throw InputError("a seed is required (config key `seed` or --seed)");
    return cfg;
}

SceneSpec scene_spec_from(const Config& cfg) {
    SceneSpec s = default_scene_spec();
    s.image_size = int(cfg.get_long("image_size", s.image_size));
    s.n_train = int(cfg.get_long("n_train", s.n_train));
    s.n_test = int(cfg.get_long("n_test", s.n_test));
    s.checker_scale = cfg.get_double("checker_scale", s.checker_scale);
    s.ambient = cfg.get_double("ambient", s.ambient);
    s.near = cfg.get_double("near", s.near);
    s.far = cfg.get_double("far", s.far);
    s.camera_radius = cfg.get_double("camera_radius", s.camera_radius);
    s.camera_height = cfg.get_double("camera_height", s.camera_height);
    return s;
}

CorruptionSpec corruption_spec_from(const Config& cfg) {
    CorruptionSpec c = default_corruption_spec();
    c.scale = cfg.get_double("corruption_scale", c.scale);
    c.scale_jitter = cfg.get_double("corruption_scale_jitter", c.scale_jitter);
    c.warp_amplitude = cfg.get_double("corruption_warp_amplitude", c.warp_amplitude);
    c.warp_wavelength = cfg.get_double("corruption_warp_wavelength", c.warp_wavelength);
    c.n_blobs = int(cfg.get_long("corruption_blobs", c.n_blobs));
    c.blob_radius = cfg.get_double("corruption_blob_radius", c.blob_radius);
    c.blob_offset = cfg.get_double("corruption_blob_offset", c.blob_offset);
    c.noise_sigma = cfg.get_double("corruption_noise_sigma", c.noise_sigma);
    return c;
}

int cmd_gen_scene(const std::string& config_path, const std::string& out,
                  std::uint64_t seed, bool seed_given) {
    Config cfg = load_config(config_path, seed, seed_given);
    const auto scene = scene_spec_from(cfg);
    const auto corruption = corruption_spec_from(cfg);
    const int traj_steps = int(cfg.get_long("traj_steps", 20));
    auto ds = build_benchmark_dataset(scene, corruption, traj_steps,
                                      std::uint64_t(cfg.get_long("seed", 0)));
    write_dataset(out, ds);

    nlohmann::json manifest;
    manifest["version"] = "dgnerf-1.0";
    manifest["seed"] = cfg.get_long("seed", 0);
    manifest["config"] = cfg.entries();
    manifest["views"] = ds.views.size();
    std::ofstream mf(out + "/run_manifest.json");
    mf << manifest.dump(2) << "\n";
    std::cout << "wrote " << ds.views.size() << " views to " << out << "\n";
    return 0;
}

TrainConfig apply_cli_overrides(Config& cfg, const std::string& loss,
                                const std::string& emd_mode, const std::string& uncertainty,
                                long steps) {
    if (!loss.empty()) cfg.set("loss", loss);
    if (!emd_mode.empty()) cfg.set("emd_mode", emd_mode);
    if (!uncertainty.empty()) cfg.set("uncertainty", uncertainty);
    if (steps >= 0) cfg.set("steps", std::to_string(steps));
    return train_config_from(cfg);
}

int cmd_train(const std::string& data, const std::string& config_path, const std::string& out,
              std::uint64_t seed, bool seed_given, const std::string& loss,
              const std::string& emd_mode, const std::string& uncertainty, long steps) {
    Config cfg = load_config(config_path, seed, seed_given);
    TrainConfig tc = apply_cli_overrides(cfg, loss, emd_mode, uncertainty, steps);
    auto ds = read_dataset(data);
    run_training_job(ds, tc, cfg, data, out);
    std::cout << "training complete: " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& out,
             const std::string& config_path, std::uint64_t seed, bool seed_given) {
    Config cfg = load_config(config_path, seed, seed_given);
    TrainConfig tc = train_config_from(cfg);
    auto ds = read_dataset(data);
    auto ckpt = load_checkpoint(ckpt_path);
    FieldMlp coarse(tc.mlp, Rng(0)), fine(tc.mlp, Rng(1));
    restore_net(coarse, ckpt, "coarse/");
    restore_net(fine, ckpt, "fine/");
    fs::create_directories(out);
    auto report = evaluate_views(coarse, fine, ds, tc, ds.test_ids());
    write_metrics_report(out, report, ds.test_ids());
    std::cout << "rmse " << report.depth.rmse << " abs_rel " << report.depth.abs_rel
              << " psnr " << report.psnr << "\n";
    return 0;
}

int cmd_uncertainty(const std::string& data, const std::string& out, double tau_override) {
    auto ds = read_dataset(data, true);
    if (ds.trajectories.empty()) throw DataError("no trajectories in " + data);
    const double tau = tau_override > 0 ? tau_override
                                        : default_tau(ds.spec.far, ds.spec.near);
    fs::create_directories(out);

    // per-threshold mean prior error split, pooled over training views
    std::vector<double> thresholds;
    for (int k = 0; k <= 8; ++k) thresholds.push_back(0.1 * k);
    std::vector<double> err_above(thresholds.size(), 0.0), n_above(thresholds.size(), 0.0);
    std::vector<double> err_below(thresholds.size(), 0.0), n_below(thresholds.size(), 0.0);

    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
        const auto& traj = ds.trajectories[i];
        const int vid = traj.source_image_id;
        const auto& mirrored = ds.mirrored_trajectories.at(i);
        auto u = compute_uncertainty(traj, mirrored, tau);
        char name[32];
        std::snprintf(name, sizeof(name), "uncert_%04d.pfm", vid);
        write_pfm(out + "/" + name, u.values);

        if (ds.priors[vid].depth.size() == 0) continue;
        const Grid err = aligned_error_map(ds.views[vid].depth, ds.priors[vid].depth);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            for (std::size_t px = 0; px < err.size(); ++px) {
                if (u.values.data[px] >= thresholds[t]) {
                    err_above[t] += err.data[px];
                    n_above[t] += 1;
                } else {
                    err_below[t] += err.data[px];
                    n_below[t] += 1;
                }
            }
        }
    }

    std::ofstream csv(out + "/threshold_curve.csv");
    csv << "threshold,mean_error_above,mean_error_below,fraction_above\n";
    char buf[160];
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        const double above = n_above[t] > 0 ? err_above[t] / n_above[t] : 0.0;
        const double below = n_below[t] > 0 ? err_below[t] / n_below[t] : 0.0;
        const double frac = n_above[t] / std::max(1.0, n_above[t] + n_below[t]);
        std::snprintf(buf, sizeof(buf), "%.1f,%.9g,%.9g,%.9g\n", thresholds[t], above, below,
                      frac);
        csv << buf;
    }
    std::cout << "uncertainty maps and threshold curve written to " << out << "\n";
    return 0;
}

struct AblationCell {
    std::string loss;
    bool uncertainty = false;
    std::uint64_t seed = 0;
    std::string run_dir;
};

int run_cell(const SceneDataset& ds, Config base_cfg, const AblationCell& cell,
             const std::string& data_path) {
    base_cfg.set("loss", cell.loss);
    base_cfg.set("uncertainty", cell.uncertainty ? "on" : "off");
    base_cfg.set("seed", std::to_string(cell.seed));
    TrainConfig tc = train_config_from(base_cfg);
    run_training_job(ds, tc, base_cfg, data_path, cell.run_dir);
    return 0;
}

int cmd_ablate(const std::string& data, const std::string& grid_path, const std::string& out,
               std::uint64_t seed, bool seed_given) {
    Config cfg = load_config(grid_path, seed, seed_given);
    auto ds = read_dataset(data);
    fs::create_directories(out);

    std::vector<std::uint64_t> seeds;
    {
        std::istringstream ss(cfg.get("seeds", cfg.get("seed", "0")));
        std::uint64_t s;
        while (ss >> s) seeds.push_back(s);
    }
    std::vector<std::string> losses;
    {
        std::istringstream ss(cfg.get("losses", "none l2 l2h emd"));
        std::string l;
        while (ss >> l) losses.push_back(l);
    }

    std::vector<AblationCell> cells;
    for (const auto& loss : losses) {
        for (bool unc : {false, true}) {
            if (loss == "none" && unc) continue;  // u has no effect without a depth term
            for (auto s : seeds) {
                AblationCell c;
                c.loss = loss;
                c.uncertainty = unc;
                c.seed = s;
                c.run_dir = out + "/" + loss + (unc ? "_u" : "") + "_seed" + std::to_string(s);
                cells.push_back(c);
            }
        }
    }

    int workers = 1;
    if (const char* env = std::getenv("DGNERF_WORKERS")) workers = std::max(1, std::atoi(env));

    std::vector<int> status(cells.size(), -1);
    if (workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            try {
                run_cell(ds, cfg, cells[i], data);
                status[i] = 0;
            } catch (const std::exception& e) {
                std::cerr << "cell " << cells[i].run_dir << " failed: " << e.what() << "\n";
                status[i] = 1;
            }
        }
    } else {
        std::size_t next = 0;
        std::vector<std::pair<pid_t, std::size_t>> running;
        while (next < cells.size() || !running.empty()) {
            while (int(running.size()) < workers && next < cells.size()) {
                const std::size_t idx = next++;
                pid_t pid = fork();
                if (pid == 0) {
                    int rc = 1;
                    try {
                        run_cell(ds, cfg, cells[idx], data);
                        rc = 0;
                    } catch (const std::exception& e) {
                        std::cerr << "cell " << cells[idx].run_dir << " failed: " << e.what()
                                  << "\n";
                    }
                    _exit(rc);
                }
                running.emplace_back(pid, idx);
            }
            int wstatus = 0;
            pid_t done = wait(&wstatus);
            for (auto it = running.begin(); it != running.end(); ++it) {
                if (it->first == done) {
                    status[it->second] =
                        WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 1;
                    running.erase(it);
                    break;
                }
            }
        }
    }

    std::ofstream csv(out + "/ablation.csv");
    csv << "loss,uncertainty,seed,status,abs_rel,sq_rel,rmse,rmse_log,psnr\n";
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        csv << c.loss << "," << (c.uncertainty ? "on" : "off") << "," << c.seed << ","
            << (status[i] == 0 ? "ok" : "failed");
        if (status[i] == 0) {
            std::ifstream js(c.run_dir + "/metrics.json");
            nlohmann::json m;
            js >> m;
            char buf[160];
            std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,%.9g,%.9g,%.9g",
                          m["abs_rel"].get<double>(), m["sq_rel"].get<double>(),
                          m["rmse"].get<double>(), m["rmse_log"].get<double>(),
                          m["psnr"].get<double>());
            csv << buf;
        } else {
            csv << ",,,,,";
        }
        csv << "\n";
    }
    std::cout << "ablation grid written to " << out << "/ablation.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-guided NeRF training via ray-termination transport"};
    app.require_subcommand(1);

    std::string config_path, data, out, ckpt, loss, emd_mode, uncertainty, grid;
    std::uint64_t seed = 0;
    long steps = -1;
    double tau = -1;

    auto add_common = [&](CLI::App* sub, bool need_out = true) {
        sub->add_option("--config", config_path, "key-value config file");
        sub->add_option("--seed", seed, "random seed (overrides config)");
        if (need_out) sub->add_option("--out", out, "output directory")->required();
    };

    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic benchmark dataset");
    add_common(gen);

    auto* tr = app.add_subcommand("train", "train a field on a dataset");
    add_common(tr);
    tr->add_option("--data", data, "dataset directory")->required();
    tr->add_option("--loss", loss, "depth loss: none|l2|l2h|emd");
    tr->add_option("--emd-mode", emd_mode, "exact|sinkhorn");
    tr->add_option("--uncertainty", uncertainty, "on|off");
    tr->add_option("--steps", steps, "training steps");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on test views");
    add_common(ev);
    ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
    ev->add_option("--data", data, "dataset directory")->required();

    auto* ab = app.add_subcommand("ablate", "run the regularization/uncertainty grid");
    add_common(ab);
    ab->add_option("--data", data, "dataset directory")->required();
    ab->add_option("--grid", grid, "grid config file");

    auto* un = app.add_subcommand("uncertainty", "uncertainty maps + threshold curve");
    add_common(un);
    un->add_option("--data", data, "dataset directory with traj/")->required();
    un->add_option("--tau", tau, "threshold override");

    CLI11_PARSE(app, argc, argv);
    const bool seed_given = app.count_all() && (gen->count("--seed") || tr->count("--seed") ||
                                                ev->count("--seed") || ab->count("--seed"));

    try {
        if (gen->parsed()) return cmd_gen_scene(config_path, out, seed, seed_given);
        if (tr->parsed())
            return cmd_train(data, config_path, out, seed, seed_given, loss, emd_mode,
                             uncertainty, steps);
        if (ev->parsed()) return cmd_eval(ckpt, data, out, config_path, seed, seed_given);
        if (ab->parsed()) return cmd_ablate(data, grid.empty() ? config_path : grid, out,
                                            seed, seed_given);
        if (un->parsed()) return cmd_uncertainty(data, out, tau);
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitDivergence;
    }
    return 0;
}
