#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dgnerf/mlp.hpp"
#include "dgnerf/objective.hpp"
#include "dgnerf/raydist.hpp"
#include "dgnerf/raymarch.hpp"
#include "dgnerf/scenesim.hpp"
#include "dgnerf/transport.hpp"

namespace dgnerf {

enum class DepthLossType { None, L2, L2Hypothesis, Emd };

inline DepthLossType parse_depth_loss(const std::string& s) {
    if (s == "none") return DepthLossType::None;
    if (s == "l2") return DepthLossType::L2;
    if (s == "l2h") return DepthLossType::L2Hypothesis;
    if (s == "emd") return DepthLossType::Emd;
    throw InputError("unknown depth loss: " + s);
}

struct TrainConfig {
    int rays_per_batch = 32;
    int n_coarse = 16;
    int n_fine = 16;
    int n_emd_samples = 16;
    double lr = 5e-4;
    double lr_final = 5e-5;
    double lr_drop_fraction = 0.8;  // step decay at this fraction of steps
    int steps = 8000;
    double weight_decay = 1e-6;
    LossWeights loss_weights;       // lambda = 0.007, gamma = 1
    DepthLossType depth_loss = DepthLossType::Emd;
    EmdMode emd_mode = EmdMode::Exact;
    TransportParams transport;
    bool use_uncertainty = true;
    bool emd_from_fine = true;   // draw guidance samples from the fine distribution
    bool u_on_coarse = true;     // apply the focal weighting to the coarse losses too
    bool use_hypotheses = false; // multi-atom prior targets when available
    double warmup_fraction = 0.1;  // photometric-only phase before depth guidance
    double depth_grad_clip = 1.0;  // per-ray cap on |dL/dprobs| spikes; <=0 disables
    bool midpoint_quantiles = false;  // deterministic (k+0.5)/n guidance quantiles
    double empty_epsilon = 1e-8;
    double scale_lr = 1e-7;
    std::uint64_t seed = 0;
    MlpConfig mlp;

    void validate() const {
        if (rays_per_batch < 1 || n_coarse < 2 || n_fine < 0 || n_emd_samples < 1)
            throw InputError("TrainConfig: positive counts required");
        if (steps < 0) throw InputError("TrainConfig: steps >= 0");
        if (lr_final > lr) throw InputError("TrainConfig: lr_final <= lr");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
            throw InputError("TrainConfig: warmup_fraction in [0,1)");
        loss_weights.validate();
    }

    std::string canonical() const {
        std::ostringstream o;
        o << rays_per_batch << ' ' << n_coarse << ' ' << n_fine << ' ' << n_emd_samples
          << ' ' << lr << ' ' << lr_final << ' ' << lr_drop_fraction << ' ' << steps
          << ' ' << weight_decay << ' ' << loss_weights.lambda << ' ' << loss_weights.gamma
          << ' ' << int(depth_loss) << ' ' << int(emd_mode) << ' ' << transport.blur
          << ' ' << use_uncertainty << ' ' << emd_from_fine << ' ' << u_on_coarse
          << ' ' << use_hypotheses << ' ' << warmup_fraction
          << ' ' << depth_grad_clip << ' ' << midpoint_quantiles
          << ' ' << empty_epsilon << ' ' << scale_lr
          << ' ' << seed << ' ' << mlp.pos_levels << ' ' << mlp.dir_levels
          << ' ' << mlp.trunk_layers << ' ' << mlp.width << ' ' << mlp.dropout_p;
        return o.str();
    }
};

/// Full-scale settings matching the published training recipe.
inline TrainConfig paper_profile() {
    TrainConfig c;
    c.rays_per_batch = 1024;
    c.n_coarse = 64;
    c.n_fine = 128;
    c.n_emd_samples = 128;
    c.steps = 500000;
    c.mlp.width = 256;
    c.mlp.trunk_layers = 8;
    c.mlp.pos_levels = 10;
    c.mlp.dir_levels = 4;
    return c;
}

struct RayBatchData {
    RayBundle bundle;
    std::vector<Vec3> observed_rgb;
    std::vector<double> prior_depth;                 // unscaled z_0 per ray
    std::vector<std::vector<double>> prior_hyps;     // optional hypothesis atoms
    std::vector<double> u;                           // frozen uncertainty per ray
    std::vector<bool> has_prior;
};

/// Uniform random train-view pixels. Deterministic given the rng stream.
inline RayBatchData sample_ray_batch(const SceneDataset& ds, int n, Rng rng) {
    auto train = ds.train_ids();
    if (train.empty()) throw DataError("sample_ray_batch: no train views");
    RayBatchData batch;
    batch.bundle.near = ds.spec.near;
    batch.bundle.far = ds.spec.far;
    for (int k = 0; k < n; ++k) {
        const int vid = train[std::size_t(rng.uniform() * train.size()) % train.size()];
        const auto& view = ds.views[vid];
        const int r = int(rng.uniform() * view.intrinsics.height) % view.intrinsics.height;
        const int c = int(rng.uniform() * view.intrinsics.width) % view.intrinsics.width;
        batch.bundle.origins.push_back(view.pose.position);
        batch.bundle.directions.push_back(view.pose.ray_direction(view.intrinsics, r, c));
        batch.bundle.pixel_ids.push_back(r * view.intrinsics.width + c);
        batch.observed_rgb.push_back(view.rgb.at(r, c));
        const auto& prior = ds.priors[vid];
        const bool has = prior.depth.size() > 0;
        batch.has_prior.push_back(has);
        batch.prior_depth.push_back(has ? prior.depth.at(r, c) : 0.0);
        batch.u.push_back(has && prior.uncertainty.size() > 0 ? prior.uncertainty.at(r, c) : 0.0);
        std::vector<double> hyps;
        if (has)
            for (const auto& hmap : prior.hypotheses) hyps.push_back(hmap.at(r, c));
        batch.prior_hyps.push_back(std::move(hyps));
    }
    return batch;
}

struct BatchEval {
    LossBreakdown breakdown;
    FieldMlp::Grads grads_coarse, grads_fine;
    double grad_scale = 0;
};

namespace detail {

struct NetPass {
    QuadratureSegments segs;
    FieldMlp::Cache cache;
    std::vector<WeightsResult> weights;   // per ray
    std::vector<Vec3> colors;             // rendered
    std::vector<double> depths;
    Vec dsigma;                           // accumulated per-point adjoints
    Mat dcolor;
};

inline void encode_batch(const RayBundle& bundle, const QuadratureSegments& segs,
                         const MlpConfig& cfg, Mat& x_pos, Mat& x_dir) {
    std::size_t total = 0;
    for (const auto& s : segs.rays) total += s.distances.size();
    x_pos.resize(total, cfg.pos_dim());
    x_dir.resize(total, cfg.dir_dim());
    std::size_t row = 0;
    std::vector<double> enc;
    for (std::size_t r = 0; r < bundle.size(); ++r) {
        const auto dir_enc = positional_encode(bundle.directions[r], cfg.dir_levels);
        for (double t : segs.rays[r].distances) {
            const Vec3 p = bundle.origins[r] + bundle.directions[r] * t;
            enc.clear();
            positional_encode_scalar(p.x, cfg.pos_levels, enc);
            positional_encode_scalar(p.y, cfg.pos_levels, enc);
            positional_encode_scalar(p.z, cfg.pos_levels, enc);
            for (int j = 0; j < cfg.pos_dim(); ++j) x_pos(row, j) = enc[j];
            for (int j = 0; j < cfg.dir_dim(); ++j) x_dir(row, j) = dir_enc[j];
            ++row;
        }
    }
}

inline void run_net(const FieldMlp& net, const RayBundle& bundle, NetPass& pass,
                    bool training, Rng* drop_rng) {
    Mat x_pos, x_dir;
    encode_batch(bundle, pass.segs, net.cfg, x_pos, x_dir);
    pass.cache = net.forward(x_pos, x_dir, training, drop_rng);
    const auto n_rays = bundle.size();
    pass.weights.resize(n_rays);
    pass.colors.resize(n_rays);
    pass.depths.resize(n_rays);
    pass.dsigma = Vec::Zero(x_pos.rows());
    pass.dcolor = Mat::Zero(x_pos.rows(), 3);
    std::size_t row = 0;
    for (std::size_t r = 0; r < n_rays; ++r) {
        const auto& seg = pass.segs.rays[r];
        const auto l = seg.distances.size();
        std::vector<double> sigmas(l);
        for (std::size_t i = 0; i < l; ++i) sigmas[i] = pass.cache.sigma(row + i);
        pass.weights[r] = compute_weights(sigmas, seg);
        Vec3 color;
        double depth = 0;
        for (std::size_t i = 0; i < l; ++i) {
            const double w = pass.weights[r].weights[i];
            color += w * Vec3{pass.cache.color(row + i, 0), pass.cache.color(row + i, 1),
                              pass.cache.color(row + i, 2)};
            depth += w * seg.distances[i];
        }
        pass.colors[r] = color;
        pass.depths[r] = depth;
        row += l;
    }
}

/// Backpropagate a per-ray dL/dw and dL/dcolor-of-ray into the
/// per-point adjoints of a pass.
inline void backprop_ray(NetPass& pass, std::size_t ray, std::size_t row0,
                         const std::vector<double>& dL_dw, const Vec3& dL_dC) {
    const auto& seg = pass.segs.rays[ray];
    const auto l = seg.distances.size();
    std::vector<double> dw = dL_dw;
    if (dw.empty()) dw.assign(l, 0.0);
    std::vector<double> sigmas(l);
    for (std::size_t i = 0; i < l; ++i) sigmas[i] = pass.cache.sigma(row0 + i);
    // color term touches both c_i and w_i
    for (std::size_t i = 0; i < l; ++i) {
        const double w = pass.weights[ray].weights[i];
        pass.dcolor(row0 + i, 0) += w * dL_dC.x;
        pass.dcolor(row0 + i, 1) += w * dL_dC.y;
        pass.dcolor(row0 + i, 2) += w * dL_dC.z;
        const Vec3 ci{pass.cache.color(row0 + i, 0), pass.cache.color(row0 + i, 1),
                      pass.cache.color(row0 + i, 2)};
        dw[i] += ci.dot(dL_dC);
    }
    auto dsig = compute_weights_backward(sigmas, seg, pass.weights[ray], dw);
    for (std::size_t i = 0; i < l; ++i) pass.dsigma(row0 + i) += dsig[i];
}

}  // namespace detail

/// One deterministic forward/backward over a ray batch. All random
/// streams derive from (cfg.seed, step_key), so repeated evaluation is
/// bitwise reproducible; finite differences over parameters reuse the
/// same key.
inline BatchEval evaluate_batch(const FieldMlp& coarse, const FieldMlp& fine,
                                double prior_scale, const RayBatchData& batch,
                                const TrainConfig& cfg, std::uint64_t step_key,
                                bool training, bool want_grads) {
    const auto n_rays = batch.bundle.size();
    if (n_rays == 0) throw InputError("evaluate_batch: empty batch");
    Rng base = Rng(cfg.seed).split(0xBA7C0000ULL + step_key);
    Rng quad_rng = base.split(1);
    Rng drop_c = base.split(2);
    Rng drop_f = base.split(3);
    Rng resample_rng = base.split(4);
    Rng quant_rng = base.split(5);

    detail::NetPass pc, pf;
    pc.segs = stratified_sample(batch.bundle, cfg.n_coarse, quad_rng);
    detail::run_net(coarse, batch.bundle, pc, training, &drop_c);

    // coarse termination distributions drive the hierarchical resampling
    std::vector<NormalizedWeights> coarse_nw(n_rays);
    std::vector<TerminationDistribution> coarse_dist(n_rays);
    pf.segs.near = pc.segs.near;
    pf.segs.far = pc.segs.far;
    pf.segs.rays.resize(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
        coarse_nw[r] = normalize_weights(pc.weights[r].weights, cfg.empty_epsilon);
        coarse_dist[r] = build_distribution(coarse_nw[r], pc.segs.rays[r],
                                            pc.segs.near, pc.segs.far);
        Rng rr = resample_rng.split(r);
        pf.segs.rays[r] = fine_resample(coarse_dist[r], pc.segs.rays[r], cfg.n_fine,
                                        pc.segs.far, rr);
    }
    detail::run_net(fine, batch.bundle, pf, training, &drop_f);

    // fine termination distributions (guidance target side)
    std::vector<NormalizedWeights> fine_nw(n_rays);
    std::vector<TerminationDistribution> fine_dist(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
        fine_nw[r] = normalize_weights(pf.weights[r].weights, cfg.empty_epsilon);
        fine_dist[r] = build_distribution(fine_nw[r], pf.segs.rays[r],
                                          pf.segs.near, pf.segs.far);
    }

    BatchEval out;
    out.breakdown.per_ray_photo.resize(n_rays);
    out.breakdown.per_ray_depth.resize(n_rays);
    out.breakdown.per_ray_total.resize(n_rays);

    const double inv_n = 1.0 / double(n_rays);
    std::size_t row_c = 0, row_f = 0, empties = 0;
    double grad_scale = 0;

    for (std::size_t r = 0; r < n_rays; ++r) {
        // Eq. 8 is applied to each network on its own termination
        // distribution; emd_from_fine=false restricts guidance to the
        // coarse proposal (samples then come from the coarse CDF).
        const bool guided = cfg.depth_loss != DepthLossType::None && batch.has_prior[r];
        const bool fine_active = guided && cfg.emd_from_fine;
        const bool coarse_active = guided;

        const double u = cfg.use_uncertainty ? batch.u[r] : 0.0;
        const bool empty_f = fine_nw[r].empty_ray || !fine_active;
        const bool empty_c = coarse_nw[r].empty_ray || !coarse_active;
        if (cfg.emd_from_fine ? fine_nw[r].empty_ray : coarse_nw[r].empty_ray) ++empties;
        const auto rw = ray_loss_weights(u, cfg.loss_weights, empty_f);
        const auto rw_c = ray_loss_weights(cfg.u_on_coarse ? u : 0.0, cfg.loss_weights,
                                           empty_c);
        const double coarse_photo_w = cfg.u_on_coarse ? rw.photo : 1.0;

        const double photo_c = photometric_loss(pc.colors[r], batch.observed_rgb[r]);
        const double photo_f = photometric_loss(pf.colors[r], batch.observed_rgb[r]);
        const double photo = photo_c + photo_f;

        // --- depth guidance, once per supervised network ---
        // returns the per-ray depth term; fills dL_dw (already scaled by
        // w_depth * inv_n) and accumulates the prior-scale gradient
        auto depth_branch = [&](const NormalizedWeights& nw,
                                const TerminationDistribution& dist,
                                const detail::NetPass& pass, double w_depth,
                                std::uint64_t qkey,
                                std::vector<double>& dL_dw) -> double {
            const double z0 = batch.prior_depth[r];
            double depth_term = 0, ds_local = 0;
            if (cfg.depth_loss == DepthLossType::L2) {
                const double diff = pass.depths[r] - prior_scale * z0;
                depth_term = diff * diff;
                if (want_grads) {
                    const double g = 2.0 * diff * w_depth * inv_n;
                    dL_dw.assign(pass.segs.rays[r].distances.size(), 0.0);
                    for (std::size_t i = 0; i < dL_dw.size(); ++i)
                        dL_dw[i] = g * pass.segs.rays[r].distances[i];
                    grad_scale += -2.0 * diff * z0 * w_depth * inv_n;
                }
                return depth_term;
            }
            Rng qr = quant_rng.split(qkey);
            std::vector<double> q;
            if (cfg.midpoint_quantiles) {
                q.resize(cfg.n_emd_samples);
                for (int k = 0; k < cfg.n_emd_samples; ++k)
                    q[k] = (k + 0.5) / double(cfg.n_emd_samples);
            } else {
                q = stratified_quantiles(cfg.n_emd_samples, qr);
            }
            const auto samp = inverse_transform_sample(dist, q);
            std::vector<double> dL_dy(q.size(), 0.0);
            if (cfg.depth_loss == DepthLossType::L2Hypothesis) {
                const double target = prior_scale * z0;
                for (std::size_t k = 0; k < q.size(); ++k) {
                    const double d = samp.values[k] - target;
                    depth_term += d * d;
                    dL_dy[k] = 2.0 * d / double(q.size());
                    ds_local -= 2.0 * d * z0 / double(q.size());
                }
                depth_term /= double(q.size());
            } else {  // Emd
                DiscreteMass a = DiscreteMass::uniform(samp.values);
                std::vector<double> raw_atoms;
                if (cfg.use_hypotheses && !batch.prior_hyps[r].empty())
                    raw_atoms = batch.prior_hyps[r];
                else
                    raw_atoms = {z0};
                std::vector<double> scaled(raw_atoms.size());
                for (std::size_t j = 0; j < raw_atoms.size(); ++j)
                    scaled[j] = prior_scale * raw_atoms[j];
                DiscreteMass b = DiscreteMass::uniform(scaled);
                TransportGrad tg;
                depth_term = emd_loss(a, b, cfg.emd_mode, cfg.transport,
                                      want_grads ? &tg : nullptr);
                if (want_grads) {
                    dL_dy = tg.d_atoms_a;
                    for (std::size_t j = 0; j < raw_atoms.size(); ++j)
                        ds_local += tg.d_atoms_b[j] * raw_atoms[j];
                }
            }
            if (want_grads) {
                const double scale = w_depth * inv_n;
                for (auto& g : dL_dy) g *= scale;
                auto dprobs = inverse_transform_sample_backward(dist, q, samp, dL_dy);
                // the inverse-CDF pathwise estimator is unbiased but
                // heavy-tailed (1/p factors for samples landing in
                // near-empty bins); rescale rare spikes to keep the
                // direction without the variance
                double mx = 0;
                for (double g : dprobs) mx = std::max(mx, std::abs(g));
                if (mx > cfg.depth_grad_clip && cfg.depth_grad_clip > 0)
                    for (auto& g : dprobs) g *= cfg.depth_grad_clip / mx;
                dL_dw = normalize_weights_backward(nw, dprobs);
                grad_scale += ds_local * scale;
            }
            return depth_term;
        };

        double depth_c = 0, depth_f = 0;
        std::vector<double> dL_dw_c, dL_dw_f;  // scaled by w_depth * inv_n
        if (!empty_c)
            depth_c = depth_branch(coarse_nw[r], coarse_dist[r], pc, rw_c.depth,
                                   2 * r, dL_dw_c);
        if (!empty_f)
            depth_f = depth_branch(fine_nw[r], fine_dist[r], pf, rw.depth,
                                   2 * r + 1, dL_dw_f);

        out.breakdown.per_ray_photo[r] = photo;
        out.breakdown.per_ray_depth[r] = cfg.emd_from_fine ? depth_f : depth_c;
        out.breakdown.per_ray_total[r] =
            coarse_photo_w * photo_c + rw.photo * photo_f +
            rw_c.depth * depth_c + rw.depth * depth_f;

        if (want_grads) {
            // photometric adjoints
            const Vec3 dC_c = 2.0 * (pc.colors[r] - batch.observed_rgb[r]) *
                              (coarse_photo_w * inv_n);
            const Vec3 dC_f = 2.0 * (pf.colors[r] - batch.observed_rgb[r]) *
                              (rw.photo * inv_n);
            detail::backprop_ray(pc, r, row_c, dL_dw_c, dC_c);
            detail::backprop_ray(pf, r, row_f, dL_dw_f, dC_f);
        }
        row_c += pc.segs.rays[r].distances.size();
        row_f += pf.segs.rays[r].distances.size();
    }

    const double n = double(n_rays);
    for (std::size_t r = 0; r < n_rays; ++r) {
        out.breakdown.photo += out.breakdown.per_ray_photo[r];
        out.breakdown.depth += out.breakdown.per_ray_depth[r];
        out.breakdown.total += out.breakdown.per_ray_total[r];
    }
    out.breakdown.photo /= n;
    out.breakdown.depth /= n;
    out.breakdown.total /= n;
    out.breakdown.empty_ray_fraction = double(empties) / n;

    if (want_grads) {
        out.grads_coarse = FieldMlp::Grads::zeros_like(coarse);
        out.grads_fine = FieldMlp::Grads::zeros_like(fine);
        coarse.backward(pc.cache, pc.dsigma, pc.dcolor, out.grads_coarse);
        fine.backward(pf.cache, pf.dsigma, pf.dcolor, out.grads_fine);
        out.grad_scale = grad_scale;

        auto check = [](const Mat& m, const char* what) {
            if (!m.allFinite())
                throw NumericalError(std::string("backward: NaN gradient in ") + what);
        };
        out.grads_coarse.visit([&](const std::string& name, auto& g) {
            Mat m = g;
            check(m, name.c_str());
        });
        out.grads_fine.visit([&](const std::string& name, auto& g) {
            Mat m = g;
            check(m, name.c_str());
        });
        if (!std::isfinite(out.grad_scale))
            throw NumericalError("backward: NaN gradient in prior_scale");
    }
    return out;
}

// --- checkpoints ----------------------------------------------------------

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t config_hash(const TrainConfig& cfg) {
    const auto s = cfg.canonical();
    return fnv1a(s.data(), s.size());
}

struct Checkpoint {
    long step = 0;
    std::uint64_t config_hash = 0;
    double prior_scale = 1.0;
    std::vector<std::pair<std::string, Mat>> tensors;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string blob;
    for (const auto& [name, m] : ckpt.tensors)
        blob.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
    const std::uint64_t checksum = fnv1a(blob.data(), blob.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_checkpoint: cannot open " + path);
    std::uint64_t scale_bits;
    std::memcpy(&scale_bits, &ckpt.prior_scale, sizeof(scale_bits));
    out << "DGNERF_CKPT v1\n"
        << "step " << ckpt.step << "\n"
        << "config_hash " << ckpt.config_hash << "\n"
        << "prior_scale_bits " << scale_bits << "\n"
        << "checksum " << checksum << "\n"
        << "tensors " << ckpt.tensors.size() << "\n";
    for (const auto& [name, m] : ckpt.tensors)
        out << name << " " << m.rows() << " " << m.cols() << "\n";
    out.write(blob.data(), std::streamsize(blob.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_checkpoint: cannot open " + path);
    std::string magic, version, key;
    in >> magic >> version;
    if (magic != "DGNERF_CKPT" || version != "v1")
        throw DataError("load_checkpoint: bad header in " + path);
    Checkpoint ckpt;
    std::uint64_t checksum = 0;
    std::size_t n_tensors = 0;
    std::uint64_t scale_bits = 0;
    in >> key >> ckpt.step >> key >> ckpt.config_hash;
    in >> key >> scale_bits;
    std::memcpy(&ckpt.prior_scale, &scale_bits, sizeof(scale_bits));
    in >> key >> checksum >> key >> n_tensors;
    std::vector<std::tuple<std::string, long, long>> shapes;
    for (std::size_t i = 0; i < n_tensors; ++i) {
        std::string name;
        long rows, cols;
        in >> name >> rows >> cols;
        shapes.emplace_back(name, rows, cols);
    }
    in.get();  // newline before binary
    for (const auto& [name, rows, cols] : shapes) {
        Mat m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size());
        if (!in) throw DataError("load_checkpoint: truncated tensors in " + path);
        ckpt.tensors.emplace_back(name, std::move(m));
    }
    std::string all;
    for (const auto& [name, m] : ckpt.tensors)
        all.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
    if (fnv1a(all.data(), all.size()) != checksum)
        throw DataError("load_checkpoint: checksum mismatch in " + path);
    return ckpt;
}

inline Checkpoint make_checkpoint(const FieldMlp& coarse, const FieldMlp& fine,
                                  double prior_scale, long step, std::uint64_t cfg_hash) {
    Checkpoint ckpt;
    ckpt.step = step;
    ckpt.config_hash = cfg_hash;
    ckpt.prior_scale = prior_scale;
    auto grab = [&](const FieldMlp& net, const std::string& prefix) {
        const_cast<FieldMlp&>(net).visit([&](const std::string& name, auto& p) {
            Mat m = p;
            ckpt.tensors.emplace_back(prefix + name, std::move(m));
        });
    };
    grab(coarse, "coarse/");
    grab(fine, "fine/");
    return ckpt;
}

inline void restore_net(FieldMlp& net, const Checkpoint& ckpt, const std::string& prefix) {
    std::size_t found = 0;
    net.visit([&](const std::string& name, auto& p) {
        for (const auto& [tname, m] : ckpt.tensors) {
            if (tname == prefix + name) {
                if (m.rows() != p.rows() || m.cols() != p.cols())
                    throw DataError("restore_net: shape mismatch for " + tname);
                if constexpr (std::is_same_v<std::decay_t<decltype(p)>, Vec>)
                    p = m.col(0);
                else
                    p = m;
                ++found;
            }
        }
    });
    if (found == 0) throw DataError("restore_net: no tensors with prefix " + prefix);
}

// --- training loop --------------------------------------------------------

struct LossLogRow {
    long step = 0;
    double photo = 0, depth = 0, total = 0, lr = 0, scale = 1;
};

inline void write_loss_log(const std::string& path, const std::vector<LossLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("write_loss_log: cannot open " + path);
    out << "step,photo,depth,total,lr,scale\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.step, r.photo, r.depth, r.total, r.lr, r.scale);
        out << buf;
    }
}

inline double lr_schedule(const TrainConfig& cfg, long step) {
    return step < long(cfg.lr_drop_fraction * cfg.steps) ? cfg.lr : cfg.lr_final;
}

struct TrainResult {
    FieldMlp coarse, fine;
    double prior_scale = 1.0;
    std::vector<LossLogRow> log;
    bool diverged = false;
};

/// Adam state for the single prior-scale scalar; the scale is exempt
/// from weight decay.
struct ScalarAdam {
    double m = 0, v = 0;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    double step(double param, double grad, double lr) {
        ++t;
        m = beta1 * m + (1 - beta1) * grad;
        v = beta2 * v + (1 - beta2) * grad * grad;
        const double mhat = m / (1 - std::pow(beta1, t));
        const double vhat = v / (1 - std::pow(beta2, t));
        return param - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

inline TrainResult train(const TrainConfig& cfg, const SceneDataset& ds,
                         const std::string& checkpoint_on_divergence = "") {
    cfg.validate();
    Rng root(cfg.seed);
    TrainResult res;
    MlpConfig mlp = cfg.mlp;
    res.coarse = FieldMlp(mlp, root.split(100));
    res.fine = FieldMlp(mlp, root.split(101));
    res.prior_scale = 1.0;

    AdamOptimizer opt_c, opt_f;
    opt_c.weight_decay = cfg.weight_decay;
    opt_f.weight_decay = cfg.weight_decay;
    ScalarAdam opt_s;

    Rng batch_rng = root.split(200);
    for (long step = 0; step < cfg.steps; ++step) {
        auto batch = sample_ray_batch(ds, cfg.rays_per_batch, batch_rng.split(step));
        // photometric-only warmup: depth guidance only acts once the
        // density field has formed; all RNG streams stay identical
        // across loss types during this phase
        TrainConfig step_cfg = cfg;
        if (step < long(cfg.warmup_fraction * double(cfg.steps)))
            step_cfg.depth_loss = DepthLossType::None;
        BatchEval ev;
        try {
            ev = evaluate_batch(res.coarse, res.fine, res.prior_scale, batch, step_cfg,
                                std::uint64_t(step), true, true);
        } catch (const NumericalError&) {
            // NaN gradients mid-backward count as divergence; keep the
            // last finite parameter state around for inspection
            ev.breakdown.total = std::numeric_limits<double>::quiet_NaN();
        }
        const double lr = lr_schedule(cfg, step);

        if (!std::isfinite(ev.breakdown.total) || ev.breakdown.total > 1e6) {
            res.diverged = true;
            if (!checkpoint_on_divergence.empty()) {
                auto ckpt = make_checkpoint(res.coarse, res.fine, res.prior_scale,
                                            step, config_hash(cfg));
                save_checkpoint(checkpoint_on_divergence, ckpt);
            }
            throw NumericalError("train: divergence at step " + std::to_string(step));
        }

        opt_c.step(res.coarse, ev.grads_coarse, lr);
        opt_f.step(res.fine, ev.grads_fine, lr);
        if (cfg.depth_loss != DepthLossType::None && ev.grad_scale != 0) {
            res.prior_scale = opt_s.step(res.prior_scale, ev.grad_scale, cfg.scale_lr);
            res.prior_scale = std::max(res.prior_scale, 1e-6);
        }

        res.log.push_back({step, ev.breakdown.photo, ev.breakdown.depth,
                           ev.breakdown.total, lr, res.prior_scale});
    }
    return res;
}

// --- full-image rendering -------------------------------------------------

struct ViewRender {
    Image rgb;
    Grid depth;
};

inline ViewRender render_view(const FieldMlp& coarse, const FieldMlp& fine,
                              const Pose& pose, const Intrinsics& K,
                              double near, double far, const TrainConfig& cfg,
                              std::uint64_t seed_key = 0) {
    ViewRender out;
    out.rgb = Image(K.height, K.width);
    out.depth = Grid(K.height, K.width);
    const int chunk = 256;
    std::vector<std::pair<int, int>> pixels;
    pixels.reserve(std::size_t(K.height) * K.width);
    for (int r = 0; r < K.height; ++r)
        for (int c = 0; c < K.width; ++c) pixels.emplace_back(r, c);

    TrainConfig render_cfg = cfg;
    render_cfg.depth_loss = DepthLossType::None;

    for (std::size_t start = 0; start < pixels.size(); start += chunk) {
        const std::size_t end = std::min(start + chunk, pixels.size());
        RayBatchData batch;
        batch.bundle.near = near;
        batch.bundle.far = far;
        for (std::size_t i = start; i < end; ++i) {
            const auto [r, c] = pixels[i];
            batch.bundle.origins.push_back(pose.position);
            batch.bundle.directions.push_back(pose.ray_direction(K, r, c));
            batch.bundle.pixel_ids.push_back(r * K.width + c);
            batch.observed_rgb.push_back({0, 0, 0});
            batch.prior_depth.push_back(0);
            batch.prior_hyps.emplace_back();
            batch.u.push_back(0);
            batch.has_prior.push_back(false);
        }
        auto ev_key = std::uint64_t(0xF00D0000ULL + seed_key * 1000003ULL + start);
        Rng base = Rng(render_cfg.seed).split(0xBA7C0000ULL + ev_key);
        Rng quad_rng = base.split(1);
        Rng resample_rng = base.split(4);

        detail::NetPass pc, pf;
        pc.segs = stratified_sample(batch.bundle, render_cfg.n_coarse, quad_rng);
        detail::run_net(coarse, batch.bundle, pc, false, nullptr);
        pf.segs.near = pc.segs.near;
        pf.segs.far = pc.segs.far;
        pf.segs.rays.resize(batch.bundle.size());
        for (std::size_t r = 0; r < batch.bundle.size(); ++r) {
            auto nw = normalize_weights(pc.weights[r].weights, render_cfg.empty_epsilon);
            auto dist = build_distribution(nw, pc.segs.rays[r], pc.segs.near, pc.segs.far);
            Rng rr = resample_rng.split(r);
            pf.segs.rays[r] = fine_resample(dist, pc.segs.rays[r], render_cfg.n_fine,
                                            pc.segs.far, rr);
        }
        detail::run_net(fine, batch.bundle, pf, false, nullptr);

        for (std::size_t i = start; i < end; ++i) {
            const auto [r, c] = pixels[i];
            const std::size_t k = i - start;
            const Vec3 col = pf.colors[k];
            out.rgb.at(r, c) = {std::clamp(col.x, 0.0, 1.0), std::clamp(col.y, 0.0, 1.0),
                                std::clamp(col.z, 0.0, 1.0)};
            out.depth.at(r, c) = pf.depths[k];
        }
    }
    return out;
}

}  // namespace dgnerf
