#pragma once

// Shared machinery for the constrained exponent programs
//
//   minimize  sum_v c_v D(Q_v || T_v)
//   s.t.      g_c(Q) = min_{blocks of c} sum_{v linked to c} w_v D(Q_v || P_b W_{k_v}) <= lambda
//
// For multipliers s >= 0 the Q blocks are eliminated in closed form (tilted
// geometric mixtures), leaving a convex function of the P blocks that the
// kernel minimizes. The dual d(s) = min_P Psi_s(P) - lambda * sum(s) is
// maximized by one-dimensional root finding on its derivative g(s) - lambda,
// nested for two constraints.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ddetect/info_core.hpp"
#include "ddetect/solver_kernel.hpp"

namespace ddetect::detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool is_identity(const Channel& w) {
    if (w.inputs() != w.outputs()) return false;
    for (std::size_t x = 0; x < w.inputs(); ++x)
        for (std::size_t z = 0; z < w.outputs(); ++z)
            if (w(x, z) != (x == z ? 1.0 : 0.0)) return false;
    return true;
}

inline void push(const Block& p, const Channel& w, Block& out) {
    out.assign(w.outputs(), 0.0);
    for (std::size_t x = 0; x < w.inputs(); ++x) {
        if (p[x] == 0.0) continue;
        for (std::size_t z = 0; z < w.outputs(); ++z) out[z] += p[x] * w(x, z);
    }
}

// ---------------------------------------------------------------------------
// Fit objective: sum_t w_t D(q_t || P_{b_t} W_{k_t}) over blocks P_b.

struct FitTerm {
    Block q;
    std::size_t channel = 0;
    double weight = 0.0;
    std::size_t block = 0;
};

class FitObjective {
public:
    FitObjective(const ChannelBank& bank, std::vector<FitTerm> terms, std::size_t blocks)
        : bank_(&bank), terms_(std::move(terms)), blocks_(blocks) {
        std::erase_if(terms_, [](const FitTerm& t) { return t.weight == 0.0; });
    }

    [[nodiscard]] double operator()(const BlockSet& p, BlockSet* grad) const {
        double f = 0.0;
        if (grad)
            for (auto& g : *grad) std::fill(g.begin(), g.end(), 0.0);
        Block r;
        for (const auto& t : terms_) {
            const Channel& w = (*bank_)[t.channel];
            push(p[t.block], w, r);
            double d = 0.0;
            for (std::size_t z = 0; z < r.size(); ++z) {
                if (t.q[z] == 0.0) continue;
                if (r[z] <= 0.0) return kInf;
                d += t.q[z] * std::log(t.q[z] / r[z]);
            }
            f += t.weight * d;
            if (grad) {
                Block& g = (*grad)[t.block];
                for (std::size_t x = 0; x < w.inputs(); ++x) {
                    double acc = 0.0;
                    for (std::size_t z = 0; z < r.size(); ++z)
                        if (t.q[z] != 0.0) acc += t.q[z] * w(x, z) / r[z];
                    g[x] -= t.weight * acc;
                }
            }
        }
        return std::max(f, 0.0);
    }

    /// Minimizes over the given slices. Blocks whose terms all use the
    /// identity channel on a full simplex are solved exactly (weighted mixture).
    [[nodiscard]] KernelResult minimize(const std::vector<AffineSlice>& slices, const SolverConfig& cfg,
                                        const BlockSet* init = nullptr) const {
        std::vector<bool> closed(blocks_, true);
        std::vector<bool> used(blocks_, false);
        for (const auto& t : terms_) {
            used[t.block] = true;
            if (!slices[t.block].is_full() || !is_identity((*bank_)[t.channel])) closed[t.block] = false;
        }
        bool all_closed = true;
        for (std::size_t b = 0; b < blocks_; ++b) all_closed = all_closed && (closed[b] || !used[b]);
        if (all_closed) {
            KernelResult out;
            out.argmin.resize(blocks_);
            for (std::size_t b = 0; b < blocks_; ++b) {
                if (!used[b]) {
                    out.argmin[b] = slices[b].center();
                    continue;
                }
                Block mix(slices[b].size(), 0.0);
                double tot = 0.0;
                for (const auto& t : terms_) {
                    if (t.block != b) continue;
                    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += t.weight * t.q[i];
                    tot += t.weight;
                }
                for (double& v : mix) v /= tot;
                out.argmin[b] = std::move(mix);
            }
            const double v = (*this)(out.argmin, nullptr);
            out.value = ExtendedReal{v};
            out.converged = true;
            return out;
        }
        return convex_min_over_simplex([this](const BlockSet& p, BlockSet* g) { return (*this)(p, g); },
                                       slices, cfg, init);
    }

private:
    const ChannelBank* bank_;
    std::vector<FitTerm> terms_;
    std::size_t blocks_;
};

// ---------------------------------------------------------------------------
// Tilted program.

struct TiltLink {
    std::size_t constraint = 0;
    std::size_t block = 0;
};

struct TiltTerm {
    std::string role;
    std::size_t channel = 0;
    double weight = 0.0;  // a_k or alpha * b_k
    Block target;         // T_v on the output alphabet
    std::vector<TiltLink> links;
};

struct DualPoint {
    std::vector<double> s;
    double d = kNegInf;          // dual value
    double objective = 0.0;      // sum c_v D(Q_v || T_v)
    std::vector<double> g;       // constraint values at Q(s)
    std::vector<Block> q;
    BlockSet p;
    bool kernel_ok = true;
    double kernel_residual = 0.0;
};

class TiltedProgram {
public:
    TiltedProgram(const ChannelBank& bank, std::vector<TiltTerm> terms, std::vector<AffineSlice> slices,
                  std::vector<std::size_t> block_constraint, std::size_t constraints, double lambda,
                  double objective_scale = 1.0)
        : bank_(&bank),
          terms_(std::move(terms)),
          slices_(std::move(slices)),
          block_constraint_(std::move(block_constraint)),
          constraints_(constraints),
          lambda_(lambda),
          scale_(objective_scale) {
        std::erase_if(terms_, [](const TiltTerm& t) { return t.weight == 0.0; });
    }

    [[nodiscard]] std::size_t constraints() const noexcept { return constraints_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] const std::vector<TiltTerm>& terms() const noexcept { return terms_; }
    [[nodiscard]] const std::vector<AffineSlice>& slices() const noexcept { return slices_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

    /// Eliminated function Psi_s(P) and its gradient.
    double psi(const std::vector<double>& s, const BlockSet& p, BlockSet* grad) const {
        if (grad)
            for (auto& g : *grad) std::fill(g.begin(), g.end(), 0.0);
        double total = 0.0;
        const std::size_t l_out = bank_->outputs();
        std::vector<Block> r(4);
        Block lq(l_out);
        for (const auto& t : terms_) {
            const Channel& w = (*bank_)[t.channel];
            const double c = t.weight * scale_;
            double z_tot = c;
            for (const auto& ln : t.links) z_tot += t.weight * s[ln.constraint];
            if (z_tot <= 0.0) continue;
            if (r.size() < t.links.size()) r.resize(t.links.size());
            for (std::size_t j = 0; j < t.links.size(); ++j) push(p[t.links[j].block], w, r[j]);
            double mx = kNegInf;
            for (std::size_t z = 0; z < l_out; ++z) {
                double acc = 0.0;
                bool dead = false;
                if (c > 0.0) {
                    if (t.target[z] <= 0.0) dead = true;
                    else acc += c * std::log(t.target[z]);
                }
                for (std::size_t j = 0; j < t.links.size() && !dead; ++j) {
                    const double beta = t.weight * s[t.links[j].constraint];
                    if (beta == 0.0) continue;
                    if (r[j][z] <= 0.0) dead = true;
                    else acc += beta * std::log(r[j][z]);
                }
                lq[z] = dead ? kNegInf : acc / z_tot;
                mx = std::max(mx, lq[z]);
            }
            if (mx == kNegInf) return kInf;
            double sum = 0.0;
            for (std::size_t z = 0; z < l_out; ++z) sum += std::exp(lq[z] - mx);
            const double log_s = mx + std::log(sum);
            total += -z_tot * log_s;
            if (grad) {
                for (std::size_t z = 0; z < l_out; ++z) lq[z] = std::exp(lq[z] - log_s);
                for (std::size_t j = 0; j < t.links.size(); ++j) {
                    const double beta = t.weight * s[t.links[j].constraint];
                    if (beta == 0.0) continue;
                    Block& g = (*grad)[t.links[j].block];
                    for (std::size_t x = 0; x < w.inputs(); ++x) {
                        double acc = 0.0;
                        for (std::size_t z = 0; z < l_out; ++z)
                            if (lq[z] != 0.0) acc += lq[z] * w(x, z) / r[j][z];
                        g[x] -= beta * acc;
                    }
                }
            }
        }
        return total;
    }

    /// Closed-form Q blocks at (s, P).
    [[nodiscard]] std::vector<Block> tilt(const std::vector<double>& s, const BlockSet& p) const {
        std::vector<Block> out;
        out.reserve(terms_.size());
        const std::size_t l_out = bank_->outputs();
        for (const auto& t : terms_) {
            const Channel& w = (*bank_)[t.channel];
            const double c = t.weight * scale_;
            double z_tot = c;
            for (const auto& ln : t.links) z_tot += t.weight * s[ln.constraint];
            Block q(l_out, 0.0);
            if (z_tot <= 0.0) {
                // Unweighted block: the constraint is minimized by Q = P W.
                push(p[t.links.front().block], w, q);
                out.push_back(std::move(q));
                continue;
            }
            Block lq(l_out);
            double mx = kNegInf;
            Block r;
            for (std::size_t z = 0; z < l_out; ++z) lq[z] = c > 0.0 ? (t.target[z] > 0.0 ? c * std::log(t.target[z]) : kNegInf) : 0.0;
            for (const auto& ln : t.links) {
                const double beta = t.weight * s[ln.constraint];
                if (beta == 0.0) continue;
                push(p[ln.block], w, r);
                for (std::size_t z = 0; z < l_out; ++z)
                    lq[z] = (r[z] > 0.0 && lq[z] != kNegInf) ? lq[z] + beta * std::log(r[z]) : kNegInf;
            }
            for (std::size_t z = 0; z < l_out; ++z) {
                if (lq[z] != kNegInf) lq[z] /= z_tot;
                mx = std::max(mx, lq[z]);
            }
            double sum = 0.0;
            for (std::size_t z = 0; z < l_out; ++z) {
                q[z] = lq[z] == kNegInf ? 0.0 : std::exp(lq[z] - mx);
                sum += q[z];
            }
            for (double& v : q) v /= sum;
            out.push_back(std::move(q));
        }
        return out;
    }

    [[nodiscard]] double objective(const std::vector<Block>& q) const {
        double f = 0.0;
        for (std::size_t v = 0; v < terms_.size(); ++v) f += terms_[v].weight * kl_raw(q[v], terms_[v].target);
        return f;
    }

    /// g_c(Q) by re-minimizing constraint c over its own blocks.
    double refit(std::size_t c, const std::vector<Block>& q, const SolverConfig& cfg, BlockSet* p_io,
                 bool* ok) const {
        std::vector<FitTerm> ft;
        for (std::size_t v = 0; v < terms_.size(); ++v)
            for (const auto& ln : terms_[v].links)
                if (ln.constraint == c) ft.push_back({q[v], terms_[v].channel, terms_[v].weight, ln.block});
        FitObjective fit(*bank_, std::move(ft), slices_.size());
        KernelResult kr = fit.minimize(slices_, cfg, p_io);
        iterations_ += kr.iterations;
        if (ok) *ok = *ok && kr.converged;
        for (std::size_t b = 0; b < slices_.size(); ++b)
            if (block_constraint_[b] == c) (*p_io)[b] = kr.argmin[b];
        return kr.value.to_double();
    }

    /// Full evaluation of the dual at s (warm-started from `warm` if given).
    DualPoint evaluate(const std::vector<double>& s, const SolverConfig& cfg, const BlockSet* warm) const {
        DualPoint dp;
        dp.s = s;
        KernelResult kr = convex_min_over_simplex(
            [this, &s](const BlockSet& p, BlockSet* g) { return psi(s, p, g); }, slices_, cfg, warm);
        iterations_ += kr.iterations;
        dp.kernel_ok = kr.converged;
        dp.kernel_residual = kr.residual;
        dp.p = kr.argmin;
        const double psi_min = kr.value.is_infinite() ? kInf : psi(s, dp.p, nullptr);
        dp.q = tilt(s, dp.p);
        dp.objective = scale_ * objective(dp.q);
        dp.g.assign(constraints_, 0.0);
        for (std::size_t c = 0; c < constraints_; ++c) {
            if (s[c] > 0.0) {
                double gc = 0.0;
                for (std::size_t v = 0; v < terms_.size(); ++v)
                    for (const auto& ln : terms_[v].links)
                        if (ln.constraint == c) {
                            Block r;
                            push(dp.p[ln.block], (*bank_)[terms_[v].channel], r);
                            gc += terms_[v].weight * kl_raw(dp.q[v], r);
                        }
                dp.g[c] = gc;
            } else {
                dp.g[c] = refit(c, dp.q, cfg, &dp.p, &dp.kernel_ok);
            }
        }
        double ssum = 0.0;
        for (double v : s) ssum += v;
        dp.d = psi_min - lambda_ * ssum;
        return dp;
    }

private:
    const ChannelBank* bank_;
    std::vector<TiltTerm> terms_;
    std::vector<AffineSlice> slices_;
    std::vector<std::size_t> block_constraint_;
    std::size_t constraints_;
    double lambda_;
    double scale_;
    mutable int iterations_ = 0;
};

// ---------------------------------------------------------------------------
// One-dimensional dual maximization.

struct DualSearch {
    DualPoint best;   // largest dual value seen
    DualPoint last;   // final iterate (closest to the root)
    bool converged = false;
    double residual = 0.0;  // |g_c - lambda| at `last`, 0 when the multiplier is 0
};

/// Maximizes s -> eval(s).d over s >= 0 for constraint c, where eval(s).g[c] - lambda
/// is the derivative. Root found by bracketing then Illinois regula falsi.
inline DualSearch maximize_dual_1d(const std::function<DualPoint(double)>& eval, std::size_t c, double lambda,
                                   const SolverConfig& cfg) {
    DualSearch out;
    const double tol = 1e-7 * std::max(1.0, lambda);
    auto keep = [&](const DualPoint& p) {
        if (p.d > out.best.d || out.best.s.empty()) out.best = p;
    };
    DualPoint lo = eval(0.0);
    keep(lo);
    bool ok = lo.kernel_ok;
    if (lo.g[c] <= lambda + tol) {
        out.last = lo;
        out.best = lo;
        out.converged = ok;
        out.residual = 0.0;
        return out;
    }
    double s = 1.0;
    DualPoint hi;
    for (;;) {
        hi = eval(s);
        keep(hi);
        ok = ok && hi.kernel_ok;
        if (hi.g[c] <= lambda) break;
        lo = hi;
        if (s >= cfg.dual_bracket_max) {
            out.last = hi;
            out.converged = false;
            out.residual = hi.g[c] - lambda;
            return out;
        }
        s = std::min(2.0 * s, cfg.dual_bracket_max);
    }
    if (lambda - hi.g[c] <= tol) {
        out.last = hi;
        out.converged = ok;
        out.residual = std::abs(hi.g[c] - lambda);
        return out;
    }
    double s_lo = lo.s[c], s_hi = hi.s[c];
    double h_lo = lo.g[c] - lambda, h_hi = hi.g[c] - lambda;
    int side = 0;
    DualPoint cur = hi;
    bool root = false;
    for (int it = 0; it < 200; ++it) {
        double sn = (s_lo * h_hi - s_hi * h_lo) / (h_hi - h_lo);
        const double width = s_hi - s_lo;
        if (!(sn > s_lo + 0.01 * width && sn < s_hi - 0.01 * width)) sn = 0.5 * (s_lo + s_hi);
        cur = eval(sn);
        keep(cur);
        ok = ok && cur.kernel_ok;
        const double h = cur.g[c] - lambda;
        if (std::abs(h) <= tol) {
            root = true;
            break;
        }
        if (h > 0) {
            s_lo = sn;
            h_lo = h;
            if (side == -1) h_hi *= 0.5;
            side = -1;
        } else {
            s_hi = sn;
            h_hi = h;
            if (side == 1) h_lo *= 0.5;
            side = 1;
        }
        if (s_hi - s_lo <= 1e-12 * s_hi) {
            root = true;  // kink of the dual
            break;
        }
    }
    out.last = cur;
    out.converged = ok && root;
    out.residual = std::abs(cur.g[c] - lambda);
    return out;
}

}  // namespace ddetect::detail
