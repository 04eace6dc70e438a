#pragma once

#include <algorithm>
#include <numeric>

#include "dgnerf/common.hpp"

namespace dgnerf {

/// Weighted atom set on the real line; common currency for NeRF
/// samples, depth priors, and transport losses.
struct DiscreteMass {
    std::vector<double> atoms;
    std::vector<double> mass;  // nonnegative, sums to 1

    static DiscreteMass uniform(std::vector<double> positions) {
        DiscreteMass m;
        const double w = 1.0 / double(positions.size());
        m.mass.assign(positions.size(), w);
        m.atoms = std::move(positions);
        return m;
    }

    static DiscreteMass point(double position) {
        return {{position}, {1.0}};
    }

    void validate() const {
        if (atoms.empty() || atoms.size() != mass.size())
            throw InputError("DiscreteMass: empty or mismatched atoms/mass");
        double total = 0;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (!std::isfinite(atoms[i])) throw InputError("DiscreteMass: non-finite atom");
            if (mass[i] < 0) throw InputError("DiscreteMass: negative mass");
            total += mass[i];
        }
        if (total <= 0) throw InputError("DiscreteMass: zero total mass");
        if (std::abs(total - 1.0) > 1e-7) throw InputError("DiscreteMass: mass not normalized");
    }
};

struct TransportParams {
    double blur = 0.05;      // entropic regularization scale, scene units
    double scaling = 0.5;    // epsilon-annealing factor in (0,1)
    int max_iters = 100;
    double tolerance = 1e-6; // marginal-violation stop
    double cost_exponent = 1.0;

    void validate() const {
        if (!(blur > 0)) throw InputError("TransportParams: blur > 0");
        if (!(scaling > 0 && scaling < 1)) throw InputError("TransportParams: scaling in (0,1)");
        if (!(tolerance > 0)) throw InputError("TransportParams: tolerance > 0");
        if (max_iters < 1) throw InputError("TransportParams: max_iters >= 1");
    }
};

struct TransportGrad {
    double value = 0;
    std::vector<double> d_atoms_a, d_atoms_b;
    std::vector<double> d_mass_a, d_mass_b;
};

namespace detail {

inline std::vector<std::size_t> sorted_order(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

}  // namespace detail

/// Exact Wasserstein-1 with cost |x-y| via the quantile-function
/// identity W1 = int_0^1 |F_a^{-1}(q) - F_b^{-1}(q)| dq, computed by
/// merging the two sorted CDFs. Optionally fills position gradients
/// (a.e. derivative; atoms with tied positions get a subgradient).
inline double emd_1d_exact(const DiscreteMass& a, const DiscreteMass& b,
                           TransportGrad* grad = nullptr) {
    a.validate();
    b.validate();
    const auto oa = detail::sorted_order(a.atoms);
    const auto ob = detail::sorted_order(b.atoms);
    if (grad) {
        grad->d_atoms_a.assign(a.atoms.size(), 0.0);
        grad->d_atoms_b.assign(b.atoms.size(), 0.0);
    }
    double value = 0;
    std::size_t ia = 0, ib = 0;
    double ca = a.mass[oa[0]], cb = b.mass[ob[0]];  // cumulative mass past current atom
    double q = 0;
    while (true) {
        const double q_next = std::min(ca, cb);
        const double seg = q_next - q;
        if (seg > 0) {
            const double xa = a.atoms[oa[ia]], xb = b.atoms[ob[ib]];
            value += seg * std::abs(xa - xb);
            if (grad) {
                const double s = xa > xb ? 1.0 : (xa < xb ? -1.0 : 0.0);
                grad->d_atoms_a[oa[ia]] += seg * s;
                grad->d_atoms_b[ob[ib]] -= seg * s;
            }
        }
        q = q_next;
        if (q >= 1.0 - 1e-15) break;
        if (ca <= cb) {
            if (++ia >= oa.size()) break;
            ca += a.mass[oa[ia]];
        } else {
            if (++ib >= ob.size()) break;
            cb += b.mass[ob[ib]];
        }
    }
    if (grad) grad->value = value;
    return value;
}

namespace detail {

inline double logaddexp(double u, double v) {
    if (u == -std::numeric_limits<double>::infinity()) return v;
    if (v == -std::numeric_limits<double>::infinity()) return u;
    const double m = std::max(u, v);
    return m + std::log1p(std::exp(std::min(u, v) - m));
}

/// -eps * log sum_j exp((g_j - C_ij)/eps) * mu_j  for every i (stable).
/// For the |x-y| cost the sum splits at x_i into prefix/suffix
/// log-sum-exps over sorted y, giving O(n log n) instead of O(n^2).
inline void softmin(const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& log_mu, const std::vector<double>& g,
                    double eps, double p, std::vector<double>& out) {
    out.resize(x.size());
    if (p == 1.0) {
        const std::size_t n = y.size();
        std::vector<std::size_t> ord(n);
        for (std::size_t j = 0; j < n; ++j) ord[j] = j;
        std::sort(ord.begin(), ord.end(),
                  [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
        std::vector<double> ys(n), pre(n + 1), suf(n + 1);
        const double ninf = -std::numeric_limits<double>::infinity();
        pre[0] = ninf;
        suf[n] = ninf;
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t j = ord[k];
            ys[k] = y[j];
            pre[k + 1] = logaddexp(pre[k], log_mu[j] + (g[j] + y[j]) / eps);
        }
        for (std::size_t k = n; k-- > 0;) {
            const std::size_t j = ord[k];
            suf[k] = logaddexp(suf[k + 1], log_mu[j] + (g[j] - y[j]) / eps);
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const std::size_t k =
                std::upper_bound(ys.begin(), ys.end(), x[i]) - ys.begin();
            out[i] = -eps * logaddexp(pre[k] - x[i] / eps, suf[k] + x[i] / eps);
        }
        return;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double c = p == 1.0 ? std::abs(x[i] - y[j])
                                      : std::pow(std::abs(x[i] - y[j]), p);
            const double v = log_mu[j] + (g[j] - c) / eps;
            if (v > m) m = v;
        }
        double s = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double c = p == 1.0 ? std::abs(x[i] - y[j])
                                      : std::pow(std::abs(x[i] - y[j]), p);
            s += std::exp(log_mu[j] + (g[j] - c) / eps - m);
        }
        out[i] = -eps * (m + std::log(s));
    }
}

inline std::vector<double> log_mass(const std::vector<double>& mass) {
    std::vector<double> lm(mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i)
        lm[i] = mass[i] > 0 ? std::log(mass[i]) : -745.0;  // exp() underflows to 0
    return lm;
}

struct SinkhornState {
    std::vector<double> f, g;  // converged dual potentials
    double value = 0;          // <a,f> + <b,g>
    double marginal_violation = 0;
};

/// Balanced entropic OT on the line with eps-scaling, log domain.
inline SinkhornState sinkhorn_ot(const std::vector<double>& xa, const std::vector<double>& ma,
                                 const std::vector<double>& xb, const std::vector<double>& mb,
                                 const TransportParams& params) {
    const auto la = log_mass(ma);
    const auto lb = log_mass(mb);
    const double p = params.cost_exponent;

    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (double v : xa) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : xb) { lo = std::min(lo, v); hi = std::max(hi, v); }
    const double diameter = std::max(hi - lo, params.blur);

    SinkhornState st;
    st.f.assign(xa.size(), 0.0);
    st.g.assign(xb.size(), 0.0);
    std::vector<double> f_new, g_new;

    double eps = std::max(diameter, params.blur);
    int iters = 0;
    while (true) {
        // alternating Sinkhorn update at the current eps; after the g
        // update the column marginals are exact, so convergence is
        // measured on the rows. Over-relaxation at the final eps speeds
        // up the slow small-regularization contraction.
        const double theta = eps <= params.blur ? 1.8 : 1.0;
        softmin(xa, xb, lb, st.g, eps, p, f_new);
        for (std::size_t i = 0; i < st.f.size(); ++i)
            st.f[i] += theta * (f_new[i] - st.f[i]);
        softmin(xb, xa, la, st.f, eps, p, g_new);
        for (std::size_t j = 0; j < st.g.size(); ++j)
            st.g[j] += theta * (g_new[j] - st.g[j]);
        ++iters;

        if (eps <= params.blur) {
            // row sum i is ma_i * exp((f_i - softmin_i(g))/eps), so the
            // check costs one extra softmin
            if (iters % 4 != 0 && iters < params.max_iters) continue;
            softmin(xa, xb, lb, st.g, eps, p, f_new);
            double viol = 0;
            for (std::size_t i = 0; i < xa.size(); ++i) {
                const double row = ma[i] * std::exp((st.f[i] - f_new[i]) / eps);
                viol = std::max(viol, std::abs(row - ma[i]));
            }
            st.marginal_violation = viol;
            if (viol < params.tolerance) break;
            if (iters >= params.max_iters) {
                throw NumericalError("sinkhorn: no convergence, marginal violation " +
                                     std::to_string(viol));
            }
        } else {
            eps = std::max(eps * params.scaling, params.blur);
        }
        if (iters >= params.max_iters && eps > params.blur)
            eps = params.blur;
    }

    st.value = 0;
    for (std::size_t i = 0; i < xa.size(); ++i) st.value += ma[i] * st.f[i];
    for (std::size_t j = 0; j < xb.size(); ++j) st.value += mb[j] * st.g[j];
    return st;
}

/// Symmetric potential of OT_eps(a, a): fixed point of f = 1/2 (f + T f).
inline std::vector<double> sinkhorn_self_potential(const std::vector<double>& x,
                                                   const std::vector<double>& m,
                                                   const TransportParams& params) {
    const auto lm = log_mass(m);
    const double p = params.cost_exponent;
    double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
    for (double v : x) { lo = std::min(lo, v); hi = std::max(hi, v); }
    const double diameter = std::max(hi - lo, params.blur);

    std::vector<double> f(x.size(), 0.0), t;
    double eps = std::max(diameter, params.blur);
    for (int it = 0; it < params.max_iters; ++it) {
        softmin(x, x, lm, f, eps, p, t);
        double delta = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double nf = 0.5 * (f[i] + t[i]);
            delta = std::max(delta, std::abs(nf - f[i]));
            f[i] = nf;
        }
        if (eps <= params.blur) {
            if (delta < params.tolerance * eps) break;
        } else {
            eps = std::max(eps * params.scaling, params.blur);
        }
    }
    return f;
}

/// dOT/dx_i = sum_j pi_ij * dc/dx at converged potentials.
inline void plan_position_grad(const std::vector<double>& xa, const std::vector<double>& ma,
                               const std::vector<double>& xb, const std::vector<double>& mb,
                               const std::vector<double>& f, const std::vector<double>& g,
                               double eps, double p,
                               std::vector<double>& dxa, std::vector<double>& dxb) {
    const auto la = log_mass(ma);
    const auto lb = log_mass(mb);
    for (std::size_t i = 0; i < xa.size(); ++i) {
        for (std::size_t j = 0; j < xb.size(); ++j) {
            const double d = xa[i] - xb[j];
            const double c = p == 1.0 ? std::abs(d) : std::pow(std::abs(d), p);
            const double pi = std::exp(la[i] + lb[j] + (f[i] + g[j] - c) / eps);
            const double dc = p == 1.0 ? (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0))
                                       : p * std::pow(std::abs(d), p - 1) * (d > 0 ? 1.0 : -1.0);
            dxa[i] += pi * dc;
            dxb[j] -= pi * dc;
        }
    }
}

/// Gaussian elimination with partial pivoting; overwrites A and rhs,
/// leaves the solution in rhs.
inline void solve_dense(std::vector<double>& A, std::vector<double>& rhs, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(A[r * n + k]) > std::abs(A[piv * n + k])) piv = r;
        if (piv != k) {
            for (std::size_t c = k; c < n; ++c) std::swap(A[k * n + c], A[piv * n + c]);
            std::swap(rhs[k], rhs[piv]);
        }
        const double d = A[k * n + k];
        if (d == 0.0) throw NumericalError("sinkhorn: singular adjoint system");
        for (std::size_t r = k + 1; r < n; ++r) {
            const double m = A[r * n + k] / d;
            if (m == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) A[r * n + c] -= m * A[k * n + c];
            rhs[r] -= m * rhs[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double s = rhs[k];
        for (std::size_t c = k + 1; c < n; ++c) s -= A[k * n + c] * rhs[c];
        rhs[k] = s / A[k * n + k];
    }
}

/// Transport cost <pi, C> of the plan induced by converged potentials,
/// with exact total derivatives w.r.t. atom positions and masses.
///
/// Unlike the dual value, the plan cost has no envelope property: the
/// plan itself moves when atoms or masses move. The potentials solve the
/// marginal equations r_i = sum_j pi_ij - ma_i = 0, s_j = sum_i pi_ij -
/// mb_j = 0, so the implicit sensitivity is folded in with one adjoint
/// solve against the (gauge-fixed) Jacobian of those equations.
inline double plan_cost_grad(const std::vector<double>& xa, const std::vector<double>& ma,
                             const std::vector<double>& xb, const std::vector<double>& mb,
                             const std::vector<double>& f, const std::vector<double>& g,
                             double eps, double p,
                             std::vector<double>* dxa, std::vector<double>* dxb,
                             std::vector<double>* dma, std::vector<double>* dmb) {
    const std::size_t n = xa.size(), m = xb.size();
    const auto la = log_mass(ma);
    const auto lb = log_mass(mb);
    std::vector<double> pi(n * m), cost_m(n * m), dc_m(n * m);
    double cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = xa[i] - xb[j];
            const double c = p == 1.0 ? std::abs(d) : std::pow(std::abs(d), p);
            const double w = std::exp(la[i] + lb[j] + (f[i] + g[j] - c) / eps);
            pi[i * m + j] = w;
            cost_m[i * m + j] = c;
            dc_m[i * m + j] = p == 1.0 ? (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0))
                                       : p * std::pow(std::abs(d), p - 1) * (d > 0 ? 1.0 : -1.0);
            cost += c * w;
        }
    }
    if (!dxa) return cost;

    // adjoint lambda solves J lambda = dV/d(f,g), with
    // J = (1/eps) [diag(row sums), pi; pi^T, diag(col sums)]; J has the
    // constant-shift null vector [1, -1], so the last unknown is pinned
    const std::size_t N = n + m;
    std::vector<double> J(N * N, 0.0), lam(N, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0, pv = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const double w = pi[i * m + j];
            row += w;
            pv += w * cost_m[i * m + j];
            J[i * N + n + j] = w / eps;
        }
        J[i * N + i] = row / eps;
        lam[i] = pv / eps;
    }
    for (std::size_t j = 0; j < m; ++j) {
        double col = 0, qv = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = pi[i * m + j];
            col += w;
            qv += w * cost_m[i * m + j];
            J[(n + j) * N + i] = w / eps;
        }
        J[(n + j) * N + n + j] = col / eps;
        lam[n + j] = qv / eps;
    }
    for (std::size_t c = 0; c < N; ++c) J[(N - 1) * N + c] = c == N - 1 ? 1.0 : 0.0;
    lam[N - 1] = 0.0;
    // coincident atoms make rows of pi collinear; a relative ridge keeps
    // the gauge-fixed system solvable without moving healthy solutions
    double diag_max = 0.0;
    for (std::size_t k = 0; k + 1 < N; ++k) diag_max = std::max(diag_max, J[k * N + k]);
    for (std::size_t k = 0; k + 1 < N; ++k) J[k * N + k] += 1e-12 * diag_max;
    solve_dense(J, lam, N);

    dxa->assign(n, 0.0);
    dxb->assign(m, 0.0);
    if (dma) dma->assign(n, 0.0);
    if (dmb) dmb->assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double w = pi[i * m + j];
            const double c = cost_m[i * m + j];
            const double dc = dc_m[i * m + j];
            // explicit dV/dx plus the adjoint times d(r,s)/dx
            const double gpos = w * dc * (1.0 - c / eps + (lam[i] + lam[n + j]) / eps);
            (*dxa)[i] += gpos;
            (*dxb)[j] -= gpos;
            // d r_i / d ma_i vanishes at convergence, so only the
            // opposite side's adjoint enters; defined up to a constant
            // (masses live on the simplex)
            if (dma) (*dma)[i] += w / ma[i] * (c - lam[n + j]);
            if (dmb) (*dmb)[j] += w / mb[j] * (c - lam[i]);
        }
    }
    return cost;
}

}  // namespace detail

/// Debiased entropic Sinkhorn divergence in the sharp convention,
///   S_eps(a,b) = <pi_ab, C> - 1/2 <pi_aa, C> - 1/2 <pi_bb, C>,
/// evaluated on the converged plans (the entropy term cancels much
/// faster than in the dual value, giving the tight W1 estimate the
/// acceptance tolerances assume). Gradients carry the implicit plan
/// sensitivity via the adjoint solve in plan_cost_grad.
inline double sinkhorn_divergence(const DiscreteMass& a, const DiscreteMass& b,
                                  const TransportParams& params,
                                  TransportGrad* grad = nullptr) {
    a.validate();
    b.validate();
    params.validate();
    const double p = params.cost_exponent;
    const double eps = params.blur;

    auto ab = detail::sinkhorn_ot(a.atoms, a.mass, b.atoms, b.mass, params);
    auto fa = detail::sinkhorn_self_potential(a.atoms, a.mass, params);
    auto fb = detail::sinkhorn_self_potential(b.atoms, b.mass, params);

    if (!grad) {
        const double cost_ab = detail::plan_cost_grad(
            a.atoms, a.mass, b.atoms, b.mass, ab.f, ab.g, eps, p,
            nullptr, nullptr, nullptr, nullptr);
        const double cost_aa = detail::plan_cost_grad(
            a.atoms, a.mass, a.atoms, a.mass, fa, fa, eps, p,
            nullptr, nullptr, nullptr, nullptr);
        const double cost_bb = detail::plan_cost_grad(
            b.atoms, b.mass, b.atoms, b.mass, fb, fb, eps, p,
            nullptr, nullptr, nullptr, nullptr);
        return std::max(cost_ab - 0.5 * cost_aa - 0.5 * cost_bb, 0.0);
    }

    std::vector<double> dxa, dxb, dma, dmb;
    std::vector<double> sxa, sxb, sma, smb;  // self-term scratch
    const double cost_ab = detail::plan_cost_grad(
        a.atoms, a.mass, b.atoms, b.mass, ab.f, ab.g, eps, p,
        &dxa, &dxb, &dma, &dmb);
    grad->d_atoms_a = std::move(dxa);
    grad->d_atoms_b = std::move(dxb);
    grad->d_mass_a = std::move(dma);
    grad->d_mass_b = std::move(dmb);

    // in OT(a,a) each atom appears on both sides, so its derivative is
    // the sum of the row-side and column-side contributions
    const double cost_aa = detail::plan_cost_grad(
        a.atoms, a.mass, a.atoms, a.mass, fa, fa, eps, p,
        &sxa, &sxb, &sma, &smb);
    for (std::size_t i = 0; i < a.atoms.size(); ++i) {
        grad->d_atoms_a[i] -= 0.5 * (sxa[i] + sxb[i]);
        grad->d_mass_a[i] -= 0.5 * (sma[i] + smb[i]);
    }
    const double cost_bb = detail::plan_cost_grad(
        b.atoms, b.mass, b.atoms, b.mass, fb, fb, eps, p,
        &sxa, &sxb, &sma, &smb);
    for (std::size_t j = 0; j < b.atoms.size(); ++j) {
        grad->d_atoms_b[j] -= 0.5 * (sxa[j] + sxb[j]);
        grad->d_mass_b[j] -= 0.5 * (sma[j] + smb[j]);
    }
    const double value = std::max(cost_ab - 0.5 * cost_aa - 0.5 * cost_bb, 0.0);
    grad->value = value;
    return value;
}

enum class EmdMode { Exact, Sinkhorn };

/// Dispatching depth-guidance loss between the NeRF sample set and the
/// (already scale-adjusted) prior atoms.
inline double emd_loss(const DiscreteMass& samples, const DiscreteMass& prior,
                       EmdMode mode, const TransportParams& params,
                       TransportGrad* grad = nullptr) {
    if (mode == EmdMode::Exact) return emd_1d_exact(samples, prior, grad);
    return sinkhorn_divergence(samples, prior, params, grad);
}

}  // namespace dgnerf
