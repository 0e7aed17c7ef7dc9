#pragma once

// Convex minimization over products of probability simplices, optionally
// intersected with affine slices {P : P W_k = P_anchor W_k}.
//
// The iteration is entropic mirror descent (multiplicative weights) with an
// adaptive step and an Armijo test in the KL geometry. Affine slices are
// handled by a KL (Bregman) projection after each multiplicative step. The
// stopping residual is the Frank-Wolfe gap <g, P - V*>, which upper-bounds the
// suboptimality F(P) - min F for convex F.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ddetect/info_core.hpp"

namespace ddetect {

struct SolverConfig {
    double objective_tol = 1e-8;   // outer (dual / constraint activity) tolerance
    double simplex_tol = 1e-10;    // kernel Frank-Wolfe gap tolerance
    int max_iters = 10000;         // kernel iteration cap
    double dual_bracket_max = 1e4; // largest multiplier / alpha probed
    double grid_resolution = 0.01; // oracle only

    void validate() const {
        if (!(objective_tol > 0 && simplex_tol > 0 && max_iters > 0 && dual_bracket_max > 0 &&
              grid_resolution > 0))
            throw std::invalid_argument("SolverConfig: all fields must be positive");
    }
};

using Block = std::vector<double>;
using BlockSet = std::vector<Block>;

/// Intersection of the simplex on [M] with linear equalities C P = c.
class AffineSlice {
public:
    /// The whole simplex.
    static AffineSlice full(std::size_t m) {
        AffineSlice s;
        s.m_ = m;
        s.full_ = true;
        s.free_.resize(m);
        for (std::size_t i = 0; i < m; ++i) s.free_[i] = i;
        s.vertices_.clear();
        return s;
    }

    /// {P : P W_k = anchor W_k for every k with pinned[k]}.
    static AffineSlice matching(const Distribution& anchor, const ChannelBank& bank,
                                const std::vector<bool>& pinned) {
        const std::size_t m = anchor.size();
        if (m != bank.inputs()) throw std::invalid_argument("AffineSlice: anchor / bank mismatch");
        std::vector<std::vector<double>> rows;
        rows.emplace_back(m, 1.0);
        for (std::size_t k = 0; k < bank.size(); ++k) {
            if (!pinned[k]) continue;
            for (std::size_t z = 0; z < bank.outputs(); ++z) {
                std::vector<double> r(m);
                for (std::size_t x = 0; x < m; ++x) r[x] = bank[k](x, z);
                rows.push_back(std::move(r));
            }
        }
        if (rows.size() == 1) return full(m);
        return from_equalities(rows, anchor.vec(), bank.outputs());
    }

    [[nodiscard]] std::size_t size() const noexcept { return m_; }
    [[nodiscard]] bool is_full() const noexcept { return full_; }
    [[nodiscard]] const std::vector<std::size_t>& free_coords() const noexcept { return free_; }
    [[nodiscard]] const std::vector<Block>& vertices() const noexcept { return vertices_; }
    /// Dimension of the slice (0 for a single point).
    [[nodiscard]] std::size_t dimension() const noexcept { return free_.size() - rank_; }

    /// min over the slice of <g, P>.
    [[nodiscard]] double min_linear(std::span<const double> g) const {
        if (full_) return *std::min_element(g.begin(), g.end());
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : vertices_) {
            double s = 0.0;
            for (std::size_t i = 0; i < m_; ++i)
                if (v[i] != 0.0) s += g[i] * v[i];
            best = std::min(best, s);
        }
        return best;
    }

    /// KL projection of exp(log_r) onto the slice; coordinates outside the
    /// support of the slice are set to zero.
    [[nodiscard]] Block project_log(std::span<const double> log_r) const {
        Block p(m_, 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i : free_) mx = std::max(mx, log_r[i]);
        if (full_ || rank_ == 1) {
            double s = 0.0;
            for (std::size_t i : free_) {
                p[i] = std::exp(log_r[i] - mx);
                s += p[i];
            }
            for (std::size_t i : free_) p[i] /= s;
            if (!full_) polish_affine(p);
            return p;
        }
        const std::size_t nf = free_.size();
        Eigen::VectorXd base(nf);
        for (std::size_t j = 0; j < nf; ++j) base[j] = std::max(log_r[free_[j]] - mx, -kLogRange);
        scale_groups(base);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rank_));
        auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& pv) {
            Eigen::VectorXd lg = base + basis_.transpose() * th;
            const double top = lg.maxCoeff();
            pv = (lg.array() - top).exp().matrix() * std::exp(top);
            return pv.sum() - th.dot(rhs_);
        };
        Eigen::VectorXd pv;
        double phi = eval(theta, pv);
        for (int it = 0; it < 400; ++it) {
            Eigen::VectorXd grad = basis_ * pv - rhs_;
            if (grad.lpNorm<Eigen::Infinity>() < 1e-15) break;
            const Eigen::MatrixXd hess = basis_ * pv.asDiagonal() * basis_.transpose();
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
            Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
            ev.array() += 1e-12 * ev.maxCoeff() + 1e-300;
            Eigen::VectorXd step = -(es.eigenvectors() * (es.eigenvectors().transpose() * grad).cwiseQuotient(ev));
            if (!step.allFinite()) step = -grad;
            // At most kMaxLogStep of log-mass per step; near-empty coordinates make the Hessian tiny.
            const double reach = (basis_.transpose() * step).lpNorm<Eigen::Infinity>();
            if (reach > kMaxLogStep) step *= kMaxLogStep / reach;
            double t = 1.0;
            Eigen::VectorXd pn;
            double phin = eval(theta + step, pn);
            while (!(phin <= phi + 1e-4 * t * grad.dot(step)) && t > 1e-12) {
                t *= 0.5;
                phin = eval(theta + t * step, pn);
            }
            theta += t * step;
            pv = pn;
            if (!(phin < phi)) {
                phi = phin;
                break;
            }
            phi = phin;
        }
        for (std::size_t j = 0; j < nf; ++j) p[free_[j]] = pv[static_cast<Eigen::Index>(j)];
        polish_affine(p);
        return p;
    }

    /// Orthonormal basis (size x r) of the directions that keep the slice's equalities,
    /// moving only coordinates with p_i > floor.
    [[nodiscard]] Eigen::MatrixXd tangent(std::span<const double> p, double floor) const {
        std::vector<Eigen::Index> act;  // positions within free_
        for (std::size_t j = 0; j < free_.size(); ++j)
            if (p[free_[j]] > floor) act.push_back(static_cast<Eigen::Index>(j));
        const auto na = static_cast<Eigen::Index>(act.size());
        if (na < 2) return Eigen::MatrixXd(static_cast<Eigen::Index>(m_), 0);
        Eigen::MatrixXd c;
        if (full_) {
            c = Eigen::MatrixXd::Ones(1, na);
        } else {
            c.resize(basis_.rows(), na);
            for (Eigen::Index j = 0; j < na; ++j) c.col(j) = basis_.col(act[static_cast<std::size_t>(j)]);
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++r;
        const Eigen::Index k = na - r;
        Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_), k);
        for (Eigen::Index j = 0; j < na; ++j)
            z.row(static_cast<Eigen::Index>(free_[static_cast<std::size_t>(act[static_cast<std::size_t>(j)])])) =
                svd.matrixV().block(j, r, 1, k);
        return z;
    }

    /// A relative-interior point: the KL projection of the uniform vector.
    [[nodiscard]] Block center() const {
        Block zero(m_, 0.0);
        return project_log(zero);
    }

private:
    static constexpr double kLogRange = 700.0;
    static constexpr double kMaxLogStep = 20.0;

    // Log-domain iterative scaling over the per-channel constraint groups. Each group's
    // columns sum to one, so every sweep moves u toward the projection from any start.
    void scale_groups(Eigen::VectorXd& u) const {
        const auto nf = u.size();
        for (int cycle = 0; cycle < 200; ++cycle) {
            double worst = 0.0;
            for (std::size_t g = 0; g < groups_.size(); ++g) {
                const Eigen::MatrixXd& a = groups_[g];
                const Eigen::VectorXd& c = targets_[g];
                Eigen::VectorXd shift = Eigen::VectorXd::Zero(nf);
                for (Eigen::Index z = 0; z < a.rows(); ++z) {
                    double top = -std::numeric_limits<double>::infinity();
                    for (Eigen::Index j = 0; j < nf; ++j)
                        if (a(z, j) > 0.0) top = std::max(top, u[j]);
                    if (!std::isfinite(top) || !(c[z] > 0.0)) continue;
                    double acc = 0.0;
                    for (Eigen::Index j = 0; j < nf; ++j)
                        if (a(z, j) > 0.0) acc += a(z, j) * std::exp(u[j] - top);
                    const double log_ratio = std::log(c[z]) - (top + std::log(acc));
                    worst = std::max(worst, std::abs(std::expm1(-log_ratio)) * c[z]);
                    for (Eigen::Index j = 0; j < nf; ++j) shift[j] += a(z, j) * log_ratio;
                }
                u += shift;
            }
            if (worst <= 1e-10) break;
        }
        u = u.cwiseMax(u.maxCoeff() - kLogRange);
    }

    static AffineSlice from_equalities(const std::vector<std::vector<double>>& rows, const Block& anchor,
                                       std::size_t group) {
        AffineSlice s;
        const std::size_t m = anchor.size();
        s.m_ = m;
        s.full_ = false;
        s.anchor_ = anchor;
        const auto nr = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd e(nr, static_cast<Eigen::Index>(m));
        for (Eigen::Index r = 0; r < nr; ++r)
            for (std::size_t x = 0; x < m; ++x) e(r, static_cast<Eigen::Index>(x)) = rows[r][x];
        Eigen::VectorXd pa = Eigen::Map<const Eigen::VectorXd>(anchor.data(), static_cast<Eigen::Index>(m));
        Eigen::VectorXd rhs = e * pa;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(e);
        lu.setThreshold(1e-10);
        const auto full_rank = static_cast<std::size_t>(lu.rank());

        // Vertices: basic feasible solutions with support size = rank.
        std::vector<std::size_t> idx(full_rank);
        std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
            if (depth == full_rank) {
                Eigen::MatrixXd a(nr, static_cast<Eigen::Index>(full_rank));
                for (std::size_t j = 0; j < full_rank; ++j) a.col(static_cast<Eigen::Index>(j)) = e.col(static_cast<Eigen::Index>(idx[j]));
                Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
                qr.setThreshold(1e-10);
                if (static_cast<std::size_t>(qr.rank()) != full_rank) return;
                Eigen::VectorXd sol = qr.solve(rhs);
                if ((a * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9) return;
                if (sol.minCoeff() < -1e-10) return;
                Block v(m, 0.0);
                double tot = 0.0;
                for (std::size_t j = 0; j < full_rank; ++j) {
                    v[idx[j]] = std::max(0.0, sol[static_cast<Eigen::Index>(j)]);
                    tot += v[idx[j]];
                }
                for (double& x : v) x /= tot;
                s.vertices_.push_back(std::move(v));
                return;
            }
            for (std::size_t i = start; i < m; ++i) {
                idx[depth] = i;
                rec(i + 1, depth + 1);
            }
        };
        if (m > 16) throw std::invalid_argument("AffineSlice: source alphabet too large for vertex enumeration");
        rec(0, 0);
        if (s.vertices_.empty()) s.vertices_.push_back(anchor);

        for (std::size_t x = 0; x < m; ++x) {
            bool used = false;
            for (const auto& v : s.vertices_) used = used || v[x] > 1e-12;
            if (used) s.free_.push_back(x);
        }
        // Orthonormal basis of the row space restricted to the free coordinates.
        const auto nf = static_cast<Eigen::Index>(s.free_.size());
        Eigen::MatrixXd ef(nr, nf);
        for (Eigen::Index j = 0; j < nf; ++j) ef.col(j) = e.col(static_cast<Eigen::Index>(s.free_[static_cast<std::size_t>(j)]));
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(ef, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        std::size_t r = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++r;
        s.rank_ = r;
        s.basis_ = svd.matrixV().leftCols(static_cast<Eigen::Index>(r)).transpose();
        Eigen::VectorXd af(nf);
        for (Eigen::Index j = 0; j < nf; ++j) af[j] = anchor[s.free_[static_cast<std::size_t>(j)]];
        s.rhs_ = s.basis_ * af;
        for (std::size_t r0 = 1; r0 + group <= rows.size(); r0 += group) {
            Eigen::MatrixXd a(static_cast<Eigen::Index>(group), nf);
            Eigen::VectorXd c(static_cast<Eigen::Index>(group));
            for (std::size_t z = 0; z < group; ++z) {
                for (Eigen::Index j = 0; j < nf; ++j)
                    a(static_cast<Eigen::Index>(z), j) = rows[r0 + z][s.free_[static_cast<std::size_t>(j)]];
                c[static_cast<Eigen::Index>(z)] = rhs[static_cast<Eigen::Index>(r0 + z)];
            }
            s.groups_.push_back(std::move(a));
            s.targets_.push_back(std::move(c));
        }
        return s;
    }

    // Removes the residual affine violation by a least-norm correction.
    void polish_affine(Block& p) const {
        if (full_) return;
        const auto nf = static_cast<Eigen::Index>(free_.size());
        Eigen::VectorXd pv(nf);
        for (Eigen::Index j = 0; j < nf; ++j) pv[j] = p[free_[static_cast<std::size_t>(j)]];
        const Eigen::VectorXd res = basis_ * pv - rhs_;
        // Correction weighted by p, so near-empty coordinates stay near empty.
        const Eigen::VectorXd w = pv.cwiseMax(0.0);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(basis_ * w.asDiagonal() * basis_.transpose());
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
        ev.array() += 1e-12 * ev.maxCoeff() + 1e-300;
        const Eigen::VectorXd y = es.eigenvectors() * (es.eigenvectors().transpose() * res).cwiseQuotient(ev);
        const Eigen::VectorXd step = w.asDiagonal() * (basis_.transpose() * y);
        if (step.allFinite() && (step.array() <= pv.array() + 1e-300).all())
            pv -= step;
        else
            pv -= basis_.transpose() * res;
        for (Eigen::Index j = 0; j < nf; ++j) p[free_[static_cast<std::size_t>(j)]] = std::max(0.0, pv[j]);
    }

    std::size_t m_ = 0;
    bool full_ = true;
    std::size_t rank_ = 1;
    std::vector<std::size_t> free_;
    std::vector<Block> vertices_;
    Block anchor_;
    Eigen::MatrixXd basis_;  // rank x |free|, orthonormal rows
    Eigen::VectorXd rhs_;
    std::vector<Eigen::MatrixXd> groups_;   // per pinned channel: W(z|x) on free coordinates
    std::vector<Eigen::VectorXd> targets_;  // anchor W
};

/// Objective over a BlockSet: returns F(P) (+inf outside the domain) and, when
/// grad is non-null, writes the gradient blockwise.
using BlockObjective = std::function<double(const BlockSet& p, BlockSet* grad)>;

struct KernelResult {
    BlockSet argmin;
    ExtendedReal value;
    double residual = 0.0;  // Frank-Wolfe gap at the returned point
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double log_floor(double v) { return std::log(std::max(v, 1e-300)); }

// Newton step on the current face: Hessian by forward differences of the gradient
// along an orthonormal tangent basis, then a positivity-safe backtracking search.
// Returns true when a decrease was accepted (p, g, f updated).
inline bool newton_step(const BlockObjective& objective, const std::vector<AffineSlice>& slices, BlockSet& p,
                        BlockSet& g, double& f) {
    const std::size_t nb = slices.size();
    std::vector<Eigen::MatrixXd> z(nb);
    Eigen::Index dim = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        z[b] = slices[b].tangent(p[b], 1e-12);
        dim += z[b].cols();
    }
    if (dim == 0 || dim > 24) return false;
    auto reduce = [&](const BlockSet& gr) {
        Eigen::VectorXd out(dim);
        Eigen::Index off = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const Eigen::Map<const Eigen::VectorXd> gb(gr[b].data(), static_cast<Eigen::Index>(gr[b].size()));
            out.segment(off, z[b].cols()) = z[b].transpose() * gb;
            off += z[b].cols();
        }
        return out;
    };
    auto move = [&](const Eigen::VectorXd& y, double t, BlockSet& out) {
        out = p;
        Eigen::Index off = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const Eigen::VectorXd d = z[b] * y.segment(off, z[b].cols());
            off += z[b].cols();
            for (std::size_t i = 0; i < out[b].size(); ++i)
                out[b][i] = std::max(0.0, p[b][i] + t * d[static_cast<Eigen::Index>(i)]);
        }
    };
    // Largest t keeping p + t d >= 0.
    auto reach = [&](const Eigen::VectorXd& y) {
        double t = std::numeric_limits<double>::infinity();
        Eigen::Index off = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const Eigen::VectorXd d = z[b] * y.segment(off, z[b].cols());
            off += z[b].cols();
            for (std::size_t i = 0; i < p[b].size(); ++i)
                if (d[static_cast<Eigen::Index>(i)] < 0.0) t = std::min(t, -p[b][i] / d[static_cast<Eigen::Index>(i)]);
        }
        return t;
    };

    const Eigen::VectorXd gr = reduce(g);
    Eigen::MatrixXd h(dim, dim);
    BlockSet pt(nb), gt(nb);
    for (std::size_t b = 0; b < nb; ++b) gt[b].assign(p[b].size(), 0.0);
    for (Eigen::Index j = 0; j < dim; ++j) {
        const Eigen::VectorXd e = Eigen::VectorXd::Unit(dim, j);
        const double hstep = std::min(1e-6, 1e-3 * reach(e));
        if (!(hstep > 0.0)) return false;
        move(e, hstep, pt);
        const double ft = objective(pt, &gt);
        if (!std::isfinite(ft)) return false;
        h.col(j) = (reduce(gt) - gr) / hstep;
    }
    h = 0.5 * (h + h.transpose());
    // Pseudo-inverse step: flat directions (zero curvature) are left to the mirror steps.
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    if (es.info() != Eigen::Success) return false;
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double cut = 1e-9 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e3 * cut) return false;
    Eigen::VectorXd coef = -(es.eigenvectors().transpose() * gr);
    for (Eigen::Index i = 0; i < dim; ++i) coef[i] = ev[i] > cut ? coef[i] / ev[i] : 0.0;
    const Eigen::VectorXd y = es.eigenvectors() * coef;
    const double slope = gr.dot(y);
    if (!(slope < 0.0) || !y.allFinite()) return false;
    double t = std::min(1.0, 0.99 * reach(y));
    const double floor = 1e-13 * std::max(1.0, std::abs(f));
    for (int bt = 0; bt < 12 && t > 0.0; ++bt, t *= 0.5) {
        move(y, t, pt);
        const double ft = objective(pt, &gt);
        if (!std::isfinite(ft)) continue;
        const double curv = reduce(gt).dot(y);
        if ((ft <= f + 1e-4 * t * slope && ft < f - floor) || curv <= 0.0) {
            p.swap(pt);
            g.swap(gt);
            f = ft;
            return true;
        }
    }
    return false;
}

}  // namespace detail

/// Minimizes a convex, relatively smooth objective over a product of slices.
/// `init` (optional) must lie in the slices; by default each block starts at
/// the slice center (the uniform point for a full simplex).
inline KernelResult convex_min_over_simplex(const BlockObjective& objective,
                                            const std::vector<AffineSlice>& slices,
                                            const SolverConfig& cfg, const BlockSet* init = nullptr) {
    const std::size_t nb = slices.size();
    KernelResult out;
    BlockSet p(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        if (init && (*init)[b].size() == slices[b].size()) {
            Block lr(slices[b].size());
            for (std::size_t i = 0; i < lr.size(); ++i) lr[i] = detail::log_floor((*init)[b][i]);
            p[b] = slices[b].project_log(lr);
        } else {
            p[b] = slices[b].center();
        }
    }
    BlockSet g(nb);
    for (std::size_t b = 0; b < nb; ++b) g[b].assign(slices[b].size(), 0.0);
    double f = objective(p, &g);
    if (std::isinf(f) || std::isnan(f)) {
        out.argmin = p;
        out.value = ExtendedReal::infinity();
        out.residual = std::numeric_limits<double>::infinity();
        out.converged = true;
        return out;
    }

    // Per-block mean <g_b, p_b>. Steps stay in the slice's tangent space, so
    // inner products use centered gradients (cancellation-free).
    auto centre = [&](const BlockSet& pt, const BlockSet& gr, std::vector<double>& mean) {
        mean.assign(nb, 0.0);
        for (std::size_t b = 0; b < nb; ++b)
            for (std::size_t i = 0; i < pt[b].size(); ++i)
                if (pt[b][i] != 0.0) mean[b] += gr[b][i] * pt[b][i];
    };
    std::vector<double> gbar, gnbar;
    Block shifted;
    auto fw_gap = [&](const BlockSet& pt, const BlockSet& gr) {
        std::vector<double> mean;
        centre(pt, gr, mean);
        double gap = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
            shifted.resize(gr[b].size());
            for (std::size_t i = 0; i < gr[b].size(); ++i) shifted[i] = gr[b][i] - mean[b];
            double ip = 0.0;
            for (std::size_t i = 0; i < pt[b].size(); ++i)
                if (pt[b][i] != 0.0) ip += shifted[i] * pt[b][i];
            gap += ip - slices[b].min_linear(shifted);
        }
        return std::max(gap, 0.0);
    };

    double eta = 1.0;
    constexpr int kNewtonAfter = 8;
    bool newton_ok = false;
    BlockSet pn(nb), gn(nb);
    for (std::size_t b = 0; b < nb; ++b) gn[b].assign(slices[b].size(), 0.0);
    double gap = fw_gap(p, g);
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        if (gap <= cfg.simplex_tol * std::max(1.0, std::abs(f))) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        bool overshot = false;
        for (int bt = 0; bt < 80; ++bt) {
            for (std::size_t b = 0; b < nb; ++b) {
                const auto& fr = slices[b].free_coords();
                double gmin = std::numeric_limits<double>::infinity();
                for (std::size_t i : fr) gmin = std::min(gmin, g[b][i]);
                Block lr(slices[b].size(), -std::numeric_limits<double>::infinity());
                for (std::size_t i : fr) lr[i] = detail::log_floor(p[b][i]) - eta * (g[b][i] - gmin);
                pn[b] = slices[b].project_log(lr);
            }
            const double fn = objective(pn, &gn);
            if (std::isfinite(fn)) {
                centre(p, g, gbar);
                centre(pn, gn, gnbar);
                double lin = 0.0, breg = 0.0, curv = 0.0, moved = 0.0;
                for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t i = 0; i < p[b].size(); ++i) {
                        const double dp = pn[b][i] - p[b][i];
                        moved = std::max(moved, std::abs(dp));
                        lin += (g[b][i] - gbar[b]) * dp;
                        curv += (gn[b][i] - gnbar[b]) * dp;
                        if (pn[b][i] > 0.0)
                            breg += pn[b][i] * (detail::log_floor(pn[b][i]) - detail::log_floor(p[b][i]));
                    }
                breg = std::max(breg, 0.0);
                // Either a clear decrease consistent with relative smoothness, or the
                // convexity certificate <g(p+), p+ - p> <= 0, which implies F(p+) <= F(p)
                // and stays reliable below the roundoff floor of F.
                const double floor = 1e-13 * std::max(1.0, std::abs(f));
                const bool smooth_ok = fn <= f + lin + breg / eta && fn < f - floor;
                if (smooth_ok || (curv <= 0.0 && lin < 0.0)) {
                    std::swap(p, pn);
                    std::swap(g, gn);
                    f = fn;
                    accepted = true;
                    eta = std::min(eta * 2.0, 1e12);
                    break;
                }
                // A step too short to register (mass starting near a face) grows eta
                // until the first genuine overshoot.
                if (moved <= 1e-12 && !overshot && eta < 1e12) {
                    eta *= 16.0;
                    continue;
                }
            }
            overshot = true;
            eta *= 0.5;
            if (eta < 1e-30) break;
        }
        gap = fw_gap(p, g);
        if (accepted && it >= kNewtonAfter && (newton_ok || it % kNewtonAfter == 0) &&
            gap > cfg.simplex_tol * std::max(1.0, std::abs(f)))
            newton_ok = detail::newton_step(objective, slices, p, g, f);
        if (newton_ok) gap = fw_gap(p, g);
        if (!accepted) {
            // No further decrease is representable; converged only if the gap is small.
            out.converged = gap <= std::sqrt(cfg.simplex_tol) * std::max(1.0, std::abs(f));
            break;
        }
    }
    if (it >= cfg.max_iters) out.converged = gap <= cfg.simplex_tol * std::max(1.0, std::abs(f));
    out.argmin = std::move(p);
    out.value = ExtendedReal{std::max(f, 0.0)};
    out.residual = gap;
    out.iterations = it;
    return out;
}

}  // namespace ddetect
