#pragma once

#include <Eigen/Dense>

#include "dgnerf/common.hpp"

namespace dgnerf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Inverted dropout: zero with probability p, scale survivors by 1/(1-p)
/// so the expected activation is unchanged.
inline Mat dropout_mask(int rows, int cols, double p, Rng& rng) {
    Mat mask(rows, cols);
    const double keep = 1.0 - p;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            mask(i, j) = rng.uniform() < p ? 0.0 : 1.0 / keep;
    return mask;
}

struct MlpConfig {
    int pos_levels = 6;
    int dir_levels = 2;
    int trunk_layers = 4;
    int width = 32;
    double dropout_p = 0.1;

    int pos_dim() const { return 6 * pos_levels; }
    int dir_dim() const { return 6 * dir_levels; }
};

/// Radiance field MLP: positional-encoding trunk (ReLU, dropout after
/// each trunk layer in training mode), a density head with shifted
/// softplus, and a view-conditioned color head with logistic output.
class FieldMlp {
  public:
    MlpConfig cfg;
    std::vector<Mat> trunk_w;
    std::vector<Vec> trunk_b;
    Mat sigma_w;  // width x 1
    Vec sigma_b;  // 1
    Mat color_hidden_w;  // (width + dir_dim) x width
    Vec color_hidden_b;
    Mat color_out_w;  // width x 3
    Vec color_out_b;

    FieldMlp() = default;

    explicit FieldMlp(const MlpConfig& c, Rng rng) : cfg(c) {
        auto init = [&](int in, int out) {
            Mat w(in, out);
            const double s = std::sqrt(2.0 / in);
            for (int i = 0; i < in; ++i)
                for (int j = 0; j < out; ++j) w(i, j) = s * rng.normal();
            return w;
        };
        int in = cfg.pos_dim();
        for (int l = 0; l < cfg.trunk_layers; ++l) {
            trunk_w.push_back(init(in, cfg.width));
            trunk_b.push_back(Vec::Zero(cfg.width));
            in = cfg.width;
        }
        sigma_w = init(cfg.width, 1);
        sigma_b = Vec::Zero(1);
        color_hidden_w = init(cfg.width + cfg.dir_dim(), cfg.width);
        color_hidden_b = Vec::Zero(cfg.width);
        color_out_w = init(cfg.width, 3);
        color_out_b = Vec::Zero(3);
    }

    /// All parameter tensors, named, in a fixed order.
    template <typename F>
    void visit(F&& f) {
        for (std::size_t l = 0; l < trunk_w.size(); ++l) {
            f("trunk_w" + std::to_string(l), trunk_w[l]);
            f("trunk_b" + std::to_string(l), trunk_b[l]);
        }
        f("sigma_w", sigma_w);
        f("sigma_b", sigma_b);
        f("color_hidden_w", color_hidden_w);
        f("color_hidden_b", color_hidden_b);
        f("color_out_w", color_out_w);
        f("color_out_b", color_out_b);
    }

    struct Cache {
        Mat x_pos, x_dir;              // inputs, P x dim
        std::vector<Mat> act;          // post-ReLU (and dropout) per trunk layer
        std::vector<Mat> pre;          // pre-activation per trunk layer
        std::vector<Mat> drop;         // dropout masks (empty when eval)
        Vec sigma_pre;                 // P
        Mat color_in;                  // P x (width + dir_dim)
        Mat color_hidden_pre, color_hidden_act;
        Mat color_pre;                 // P x 3
        Vec sigma;                     // P
        Mat color;                     // P x 3
        bool training = false;
    };

    /// Batched forward over P points. sigma >= 0, color in [0,1]^3.
    Cache forward(const Mat& x_pos, const Mat& x_dir, bool training, Rng* drop_rng) const {
        if (x_pos.cols() != cfg.pos_dim() || x_dir.cols() != cfg.dir_dim())
            throw InputError("FieldMlp: encoding dimension mismatch");
        Cache c;
        c.training = training;
        c.x_pos = x_pos;
        c.x_dir = x_dir;
        const int P = int(x_pos.rows());
        Mat h = x_pos;
        for (std::size_t l = 0; l < trunk_w.size(); ++l) {
            Mat z = (h * trunk_w[l]).rowwise() + trunk_b[l].transpose();
            c.pre.push_back(z);
            Mat a = z.cwiseMax(0.0);
            if (training && cfg.dropout_p > 0) {
                Mat mask = dropout_mask(P, int(a.cols()), cfg.dropout_p, *drop_rng);
                a = a.cwiseProduct(mask);
                c.drop.push_back(std::move(mask));
            }
            c.act.push_back(a);
            h = c.act.back();
        }
        c.sigma_pre = (h * sigma_w).col(0) + Vec::Constant(P, sigma_b(0));
        c.sigma = c.sigma_pre.unaryExpr([](double z) { return softplus(z - 1.0); });

        c.color_in.resize(P, cfg.width + cfg.dir_dim());
        c.color_in << h, x_dir;
        c.color_hidden_pre = (c.color_in * color_hidden_w).rowwise() + color_hidden_b.transpose();
        c.color_hidden_act = c.color_hidden_pre.cwiseMax(0.0);
        c.color_pre = (c.color_hidden_act * color_out_w).rowwise() + color_out_b.transpose();
        c.color = c.color_pre.unaryExpr([](double z) { return logistic(z); });
        return c;
    }

    struct Grads {
        std::vector<Mat> trunk_w;
        std::vector<Vec> trunk_b;
        Mat sigma_w;
        Vec sigma_b;
        Mat color_hidden_w;
        Vec color_hidden_b;
        Mat color_out_w;
        Vec color_out_b;

        static Grads zeros_like(const FieldMlp& net) {
            Grads g;
            for (std::size_t l = 0; l < net.trunk_w.size(); ++l) {
                g.trunk_w.push_back(Mat::Zero(net.trunk_w[l].rows(), net.trunk_w[l].cols()));
                g.trunk_b.push_back(Vec::Zero(net.trunk_b[l].size()));
            }
            g.sigma_w = Mat::Zero(net.sigma_w.rows(), net.sigma_w.cols());
            g.sigma_b = Vec::Zero(1);
            g.color_hidden_w = Mat::Zero(net.color_hidden_w.rows(), net.color_hidden_w.cols());
            g.color_hidden_b = Vec::Zero(net.color_hidden_b.size());
            g.color_out_w = Mat::Zero(net.color_out_w.rows(), net.color_out_w.cols());
            g.color_out_b = Vec::Zero(3);
            return g;
        }

        template <typename F>
        void visit(F&& f) {
            for (std::size_t l = 0; l < trunk_w.size(); ++l) {
                f("trunk_w" + std::to_string(l), trunk_w[l]);
                f("trunk_b" + std::to_string(l), trunk_b[l]);
            }
            f("sigma_w", sigma_w);
            f("sigma_b", sigma_b);
            f("color_hidden_w", color_hidden_w);
            f("color_hidden_b", color_hidden_b);
            f("color_out_w", color_out_w);
            f("color_out_b", color_out_b);
        }
    };

    /// Accumulate parameter gradients for dL/dsigma (P) and dL/dcolor (P x 3).
    void backward(const Cache& c, const Vec& dsigma, const Mat& dcolor, Grads& g) const {
        // color head
        Mat d_color_pre = dcolor.cwiseProduct(
            c.color.cwiseProduct(Mat::Ones(c.color.rows(), 3) - c.color));
        g.color_out_w += c.color_hidden_act.transpose() * d_color_pre;
        g.color_out_b += d_color_pre.colwise().sum().transpose();
        Mat d_hidden_act = d_color_pre * color_out_w.transpose();
        Mat d_hidden_pre = d_hidden_act.cwiseProduct(
            (c.color_hidden_pre.array() > 0.0).cast<double>().matrix());
        g.color_hidden_w += c.color_in.transpose() * d_hidden_pre;
        g.color_hidden_b += d_hidden_pre.colwise().sum().transpose();
        Mat d_color_in = d_hidden_pre * color_hidden_w.transpose();

        // sigma head: d softplus(z-1)/dz = logistic(z-1)
        Vec d_sigma_pre = dsigma.cwiseProduct(
            c.sigma_pre.unaryExpr([](double z) { return logistic(z - 1.0); }));
        const Mat& feat = c.act.back();
        g.sigma_w += feat.transpose() * d_sigma_pre;
        g.sigma_b(0) += d_sigma_pre.sum();

        // trunk feature receives gradient from both heads
        Mat d_h = d_sigma_pre * sigma_w.transpose()
                  + d_color_in.leftCols(cfg.width);
        for (int l = int(trunk_w.size()) - 1; l >= 0; --l) {
            if (c.training && cfg.dropout_p > 0) d_h = d_h.cwiseProduct(c.drop[l]);
            Mat d_pre = d_h.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix());
            const Mat& input = l == 0 ? c.x_pos : c.act[l - 1];
            g.trunk_w[l] += input.transpose() * d_pre;
            g.trunk_b[l] += d_pre.colwise().sum().transpose();
            if (l > 0) d_h = d_pre * trunk_w[l].transpose();
        }
    }
};

/// Adam with decoupled weight decay.
class AdamOptimizer {
  public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 1e-6;

    void step(FieldMlp& net, FieldMlp::Grads& grads, double lr) {
        ++t_;
        if (m_.empty()) init(net);
        std::size_t k = 0;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        auto upd = [&](Mat& p, const Mat& g) {
            m_[k] = beta1 * m_[k] + (1 - beta1) * g;
            v_[k] = beta2 * v_[k] + (1 - beta2) * g.cwiseProduct(g);
            Mat mhat = m_[k] / bc1;
            Mat vhat = v_[k] / bc2;
            p.array() -= lr * weight_decay * p.array();  // decoupled decay
            p.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
            ++k;
        };
        apply(net, grads, upd);
    }

  private:
    template <typename F>
    void apply(FieldMlp& net, FieldMlp::Grads& grads, F&& upd) {
        for (std::size_t l = 0; l < net.trunk_w.size(); ++l) {
            upd_mat(net.trunk_w[l], grads.trunk_w[l], upd);
            upd_vec(net.trunk_b[l], grads.trunk_b[l], upd);
        }
        upd_mat(net.sigma_w, grads.sigma_w, upd);
        upd_vec(net.sigma_b, grads.sigma_b, upd);
        upd_mat(net.color_hidden_w, grads.color_hidden_w, upd);
        upd_vec(net.color_hidden_b, grads.color_hidden_b, upd);
        upd_mat(net.color_out_w, grads.color_out_w, upd);
        upd_vec(net.color_out_b, grads.color_out_b, upd);
    }
    template <typename F>
    void upd_mat(Mat& p, const Mat& g, F&& upd) { upd(p, g); }
    template <typename F>
    void upd_vec(Vec& p, const Vec& g, F&& upd) {
        Mat pm = p, gm = g;
        upd(pm, gm);
        p = pm.col(0);
    }

    void init(FieldMlp& net) {
        auto add = [&](const Mat& p) {
            m_.push_back(Mat::Zero(p.rows(), p.cols()));
            v_.push_back(Mat::Zero(p.rows(), p.cols()));
        };
        for (std::size_t l = 0; l < net.trunk_w.size(); ++l) {
            add(net.trunk_w[l]);
            add(net.trunk_b[l]);
        }
        add(net.sigma_w);
        add(net.sigma_b);
        add(net.color_hidden_w);
        add(net.color_hidden_b);
        add(net.color_out_w);
        add(net.color_out_b);
    }

    long t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace dgnerf
