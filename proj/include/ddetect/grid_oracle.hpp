#pragma once

// Brute-force reference values for small instances. Every minimization is a
// lattice search over products of simplices, refined by zooming: after a full
// lattice at a coarse step, a box of +-4 steps around the incumbent is searched
// at half the step, re-centred until the incumbent is interior, down to the
// requested resolution. All programs here are convex, which is what makes the
// zoom legitimate. No kernel or dual machinery is used.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ddetect/exponents.hpp"
#include "ddetect/info_core.hpp"
#include "ddetect/solver_kernel.hpp"

namespace ddetect::oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct GridPoint {
    double value = kInf;
    std::vector<Block> x;  // one distribution per simplex factor
};

namespace detail {

// Coordinates of a product of simplices: each factor of size L has L-1 free coordinates.
struct Layout {
    std::vector<std::size_t> sizes;
    [[nodiscard]] std::size_t dims() const {
        std::size_t d = 0;
        for (auto s : sizes) d += s - 1;
        return d;
    }
    [[nodiscard]] bool decode(const std::vector<double>& c, std::vector<Block>& out) const {
        out.resize(sizes.size());
        std::size_t at = 0;
        for (std::size_t f = 0; f < sizes.size(); ++f) {
            out[f].assign(sizes[f], 0.0);
            double s = 0.0;
            for (std::size_t i = 0; i + 1 < sizes[f]; ++i) {
                const double v = c[at++];
                if (v < -1e-12) return false;
                out[f][i] = std::max(v, 0.0);
                s += out[f][i];
            }
            if (s > 1.0 + 1e-12) return false;
            out[f][sizes[f] - 1] = std::max(0.0, 1.0 - s);
        }
        return true;
    }
    /// decode for points known to be inside up to rounding: clamps instead of failing.
    void decode_clamped(const std::vector<double>& c, std::vector<Block>& out) const {
        out.resize(sizes.size());
        std::size_t at = 0;
        for (std::size_t f = 0; f < sizes.size(); ++f) {
            out[f].assign(sizes[f], 0.0);
            double s = 0.0;
            for (std::size_t i = 0; i + 1 < sizes[f]; ++i) s += (out[f][i] = std::max(c[at++], 0.0));
            if (s > 1.0)
                for (std::size_t i = 0; i + 1 < sizes[f]; ++i) out[f][i] /= s;
            out[f][sizes[f] - 1] = std::max(0.0, 1.0 - std::min(s, 1.0));
        }
    }
};

inline void visit_box(const Layout& lay, const std::vector<double>& centre, double h, int half,
                      const std::function<void(const std::vector<double>&)>& fn) {
    const std::size_t d = lay.dims();
    std::vector<int> off(d, -half);
    std::vector<double> c(d);
    if (d == 0) {
        fn(c);
        return;
    }
    for (;;) {
        for (std::size_t i = 0; i < d; ++i) c[i] = centre[i] + h * off[i];
        fn(c);
        std::size_t i = 0;
        while (i < d && ++off[i] > half) off[i++] = -half;
        if (i == d) break;
    }
}

}  // namespace detail

/// Minimizes f over a product of simplices (sizes given), f = +inf marks infeasible points.
inline GridPoint zoom_search(const std::vector<std::size_t>& sizes, const std::function<double(const std::vector<Block>&)>& f,
                             double coarse, double resolution) {
    detail::Layout lay{sizes};
    const std::size_t d = lay.dims();
    GridPoint best;
    std::vector<double> best_c(d, 0.0);
    std::vector<Block> x;
    auto consider = [&](const std::vector<double>& c) -> bool {
        if (!lay.decode(c, x)) return false;
        const double v = f(x);
        if (v < best.value) {
            best.value = v;
            best.x = x;
            best_c = c;
            return true;
        }
        return false;
    };
    if (d == 0) {
        consider(best_c);
        return best;
    }
    // Full coarse lattice: a box centred at 1/2 covering [0,1] in every coordinate.
    const int half = static_cast<int>(std::ceil(0.5 / coarse - 1e-9));
    detail::visit_box(lay, std::vector<double>(d, 0.5), coarse, half, [&](const std::vector<double>& c) { consider(c); });
    if (!std::isfinite(best.value)) return best;
    double h = coarse;
    while (h > resolution) {
        h = std::max(0.5 * h, resolution);
        for (int rep = 0; rep < 200; ++rep) {
            const std::vector<double> centre = best_c;
            bool edge = false;
            detail::visit_box(lay, centre, h, 4, [&](const std::vector<double>& c) {
                if (consider(c)) {
                    for (std::size_t i = 0; i < d; ++i)
                        if (std::abs(c[i] - centre[i]) > 3.5 * h) edge = true;
                }
            });
            if (!edge) break;
        }
    }
    return best;
}

/// min over P in conv(vertices) of f(P), by barycentric lattice search.
inline GridPoint min_over_vertices(const std::vector<Block>& vertices, const std::function<double(const Block&)>& f,
                                   double resolution = 1e-6) {
    const std::size_t nv = vertices.size();
    if (nv == 1) return {f(vertices[0]), {vertices[0]}};
    Block p(vertices[0].size());
    if (nv == 2) {
        // Segment: golden-section search on the convex restriction.
        auto at = [&](double t) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = (1.0 - t) * vertices[0][i] + t * vertices[1][i];
            return f(p);
        };
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double lo = 0.0, hi = 1.0;
        double x1 = hi - phi, x2 = lo + phi, f1 = at(x1), f2 = at(x2);
        while (hi - lo > resolution) {
            if (f1 <= f2) {
                hi = x2; x2 = x1; f2 = f1; x1 = hi - phi * (hi - lo); f1 = at(x1);
            } else {
                lo = x1; x1 = x2; f1 = f2; x2 = lo + phi * (hi - lo); f2 = at(x2);
            }
        }
        double bt = f1 <= f2 ? x1 : x2, bv = std::min(f1, f2);
        for (double t : {0.0, 1.0}) {
            const double v = at(t);
            if (v < bv) { bv = v; bt = t; }
        }
        at(bt);
        return {bv, {p}};
    }
    GridPoint g = zoom_search({nv}, [&](const std::vector<Block>& w) {
        std::fill(p.begin(), p.end(), 0.0);
        for (std::size_t v = 0; v < nv; ++v)
            for (std::size_t i = 0; i < p.size(); ++i) p[i] += w[0][v] * vertices[v][i];
        return f(p);
    }, 0.05, resolution);
    std::fill(p.begin(), p.end(), 0.0);
    for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += g.x[0][v] * vertices[v][i];
    return {g.value, {p}};
}

inline std::vector<Block> simplex_vertices(std::size_t m) {
    std::vector<Block> out;
    for (std::size_t x = 0; x < m; ++x) {
        Block e(m, 0.0);
        e[x] = 1.0;
        out.push_back(std::move(e));
    }
    return out;
}

/// sum_t w_t D(q_t || P W_t) minimized over P in conv(vertices).
struct FitPiece {
    const Block* q;
    const Channel* w;
    double weight;
};

inline double fit_value(const std::vector<FitPiece>& pieces, const std::vector<Block>& vertices, double resolution = 1e-6) {
    std::vector<FitPiece> live;
    for (const auto& pc : pieces)
        if (pc.weight > 0.0) live.push_back(pc);
    if (live.empty()) return 0.0;
    Block r;
    return min_over_vertices(vertices, [&](const Block& p) {
        double s = 0.0;
        for (const auto& pc : live) {
            r.assign(pc.w->outputs(), 0.0);
            for (std::size_t x = 0; x < p.size(); ++x)
                for (std::size_t z = 0; z < r.size(); ++z) r[z] += p[x] * (*pc.w)(x, z);
            s += pc.weight * ::ddetect::detail::kl_raw(*pc.q, r);
        }
        return s;
    }, resolution).value;
}


// ---------------------------------------------------------------------------
// Constrained search: min F(x) s.t. G(x) <= lambda with F, G convex.
//
// If the unconstrained minimizer of F is infeasible, the optimum lies on the
// boundary of the feasible set, which is star-shaped about any point with
// G < lambda. Directions on the surface of the cube [-1,1]^D are searched on a
// lattice with zooming; along each ray the boundary is located by bisection.

namespace detail {

struct RayProblem {
    Layout lay;
    std::vector<double> centre;  // free coordinates of a point with G < lambda
    std::function<double(const std::vector<Block>&)> F;
    std::function<double(const std::vector<Block>&)> G;
    double lambda;
};

inline std::vector<double> encode(const Layout& lay, const std::vector<Block>& x) {
    std::vector<double> c;
    for (std::size_t f = 0; f < lay.sizes.size(); ++f)
        for (std::size_t i = 0; i + 1 < lay.sizes[f]; ++i) c.push_back(x[f][i]);
    return c;
}

// Largest t with centre + t u inside the product of simplices.
inline double ray_exit(const Layout& lay, const std::vector<double>& c, const std::vector<double>& u) {
    double t = kInf;
    std::size_t at = 0;
    for (std::size_t f = 0; f < lay.sizes.size(); ++f) {
        double sc = 0.0, su = 0.0;
        for (std::size_t i = 0; i + 1 < lay.sizes[f]; ++i, ++at) {
            if (u[at] < 0.0) t = std::min(t, c[at] / -u[at]);
            sc += c[at];
            su += u[at];
        }
        if (su > 0.0) t = std::min(t, (1.0 - sc) / su);
    }
    return std::max(t, 0.0);
}

inline double ray_value(const RayProblem& rp, const std::vector<double>& u, std::vector<Block>* arg) {
    std::vector<double> c(rp.centre.size());
    std::vector<Block> x;
    auto at = [&](double t) {
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = rp.centre[i] + t * u[i];
        rp.lay.decode_clamped(c, x);
        return x;
    };
    double hi = ray_exit(rp.lay, rp.centre, u);
    double t = hi;
    double g_hi = rp.G(at(hi)) - rp.lambda;
    if (g_hi > 0.0) {
        // Regula falsi (Illinois) on the convex restriction of G along the ray.
        double lo = 0.0, g_lo = rp.G(at(0.0)) - rp.lambda;
        int side = 0;
        for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
            double mid = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
            if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
            const double gm = rp.G(at(mid)) - rp.lambda;
            if (std::abs(gm) < 1e-13) {
                lo = mid;
                break;
            }
            if (gm < 0.0) {
                lo = mid; g_lo = gm;
                if (side == -1) g_hi *= 0.5;
                side = -1;
            } else {
                hi = mid; g_hi = gm;
                if (side == 1) g_lo *= 0.5;
                side = 1;
            }
        }
        t = lo;
    }
    const double v = rp.F(at(t));
    if (arg) *arg = x;
    return v;
}

}  // namespace detail

inline GridPoint boundary_search(const detail::RayProblem& rp, double resolution) {
    const std::size_t d = rp.lay.dims();
    GridPoint best;
    // Direction u : face (axis, sign) plus D-1 face coordinates in [-1,1].
    auto dir = [&](std::size_t axis, double sign, const std::vector<double>& fc) {
        std::vector<double> u(d);
        for (std::size_t i = 0, j = 0; i < d; ++i) u[i] = i == axis ? sign : fc[j++];
        return u;
    };
    struct Cand {
        double v;
        std::size_t axis;
        double sign;
        std::vector<double> fc;
    };
    std::vector<Cand> cands;
    const double coarse = d <= 3 ? 0.1 : 0.2;
    const int half = static_cast<int>(std::lround(1.0 / coarse));
    detail::Layout face{std::vector<std::size_t>(d - 1, 2)};
    for (std::size_t axis = 0; axis < d; ++axis)
        for (double sign : {-1.0, 1.0})
            detail::visit_box(face, std::vector<double>(d - 1, 0.0), coarse, half, [&](const std::vector<double>& fc) {
                cands.push_back({detail::ray_value(rp, dir(axis, sign, fc), nullptr), axis, sign, fc});
            });
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.v < b.v; });
    const std::size_t starts = std::min<std::size_t>(3, cands.size());
    for (std::size_t s = 0; s < starts; ++s) {
        Cand cur = cands[s];
        double h = coarse;
        while (h > resolution && d > 1) {
            h = std::max(0.5 * h, resolution);
            for (int rep = 0; rep < 100; ++rep) {
                const std::vector<double> centre = cur.fc;
                bool edge = false;
                detail::visit_box(face, centre, h, 4, [&](const std::vector<double>& fc) {
                    for (double v : fc)
                        if (v < -1.0 - 1e-12 || v > 1.0 + 1e-12) return;
                    const double v = detail::ray_value(rp, dir(cur.axis, cur.sign, fc), nullptr);
                    if (v < cur.v) {
                        cur.v = v;
                        cur.fc = fc;
                        for (std::size_t i = 0; i + 1 < d; ++i)
                            if (std::abs(fc[i] - centre[i]) > 3.5 * h && std::abs(fc[i]) < 1.0 - 1e-12) edge = true;
                    }
                });
                if (!edge) break;
            }
        }
        if (cur.v < best.value) {
            best.value = cur.v;
            detail::ray_value(rp, dir(cur.axis, cur.sign, cur.fc), &best.x);
        }
    }
    return best;
}

/// min F subject to G <= lambda, given the unconstrained minimizer `target` of F
/// and a point `centre` with G(centre) < lambda.
inline GridPoint constrained_min(const std::vector<std::size_t>& sizes, const std::vector<Block>& target,
                                 const std::vector<Block>& centre,
                                 const std::function<double(const std::vector<Block>&)>& F,
                                 const std::function<double(const std::vector<Block>&)>& G, double lambda,
                                 double resolution) {
    if (G(target) <= lambda) return {F(target), target};
    detail::RayProblem rp{detail::Layout{sizes}, detail::encode(detail::Layout{sizes}, centre), F, G, lambda};
    return boundary_search(rp, resolution);
}

inline void guard(std::size_t m_src, std::size_t l_out, std::size_t k, std::size_t hyp, std::size_t dims) {
    if (l_out > 3 || k > 2 || hyp > 3 || m_src > 3 || dims > 4)
        throw std::invalid_argument("grid oracle: instance exceeds the size guard (L<=3, K<=2, m<=3, M<=3, <=4 free coordinates)");
}

inline Block push_block(const Distribution& p, const Channel& w) { return pushforward(p, w).vec(); }

inline std::vector<Block> slice_vertices(const Distribution& anchor, const ChannelBank& bank, const Proportions& b) {
    std::vector<bool> pinned(bank.size());
    for (std::size_t k = 0; k < bank.size(); ++k) pinned[k] = b[k] > 0.0;
    const auto slice = AffineSlice::matching(anchor, bank, pinned);
    return slice.is_full() ? simplex_vertices(bank.inputs()) : slice.vertices();
}

inline Distribution midpoint(const Distribution& p, const Distribution& q) {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * (p[i] + q[i]);
    return Distribution(std::move(v));
}

inline ExponentResult wrap(const GridPoint& g) {
    ExponentResult r;
    r.value = std::isfinite(g.value) ? ExtendedReal{g.value} : ExtendedReal::infinity();
    r.feasible = std::isfinite(g.value);
    r.converged = true;
    return r;
}

// ---------------------------------------------------------------------------

/// Reference min_ld: zoomed grids over both source blocks.
inline double min_ld(const DistributionTriple& t, const BinaryInstance& inst, double resolution = 1e-6) {
    guard(inst.bank.inputs(), inst.bank.outputs(), inst.bank.size(), 2, 0);
    const auto verts = simplex_vertices(inst.bank.inputs());
    std::vector<FitPiece> shared, second;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        shared.push_back({&t.Q[k].vec(), &inst.bank[k], inst.a[k]});
        shared.push_back({&t.Qt1[k].vec(), &inst.bank[k], inst.alpha * inst.b[k]});
        second.push_back({&t.Qt2[k].vec(), &inst.bank[k], inst.alpha * inst.b[k]});
    }
    return fit_value(shared, verts, resolution) + fit_value(second, verts, resolution);
}

/// Reference kappa over the slice {P : P W_k = P1 W_k, b_k > 0}.
inline double kappa(const std::vector<Distribution>& Q, const Distribution& P1, const ChannelBank& bank,
                    const Proportions& a, const Proportions& b, double resolution = 1e-6) {
    std::vector<FitPiece> pieces;
    for (std::size_t k = 0; k < bank.size(); ++k) pieces.push_back({&Q[k].vec(), &bank[k], a[k]});
    return fit_value(pieces, slice_vertices(P1, bank, b), resolution);
}

/// Reference f_alpha. The second training block is held at P2 W_k: it enters the
/// objective as D(Qt2 || P2 W) and the constraint through a term minimized to 0
/// at that point, so it is optimal there.
inline ExponentResult f_alpha(const BinaryInstance& inst, double resolution = 1e-4) {
    const std::size_t kk = inst.bank.size(), L = inst.bank.outputs();
    std::vector<std::size_t> q_idx, t_idx;
    for (std::size_t k = 0; k < kk; ++k) {
        if (inst.a[k] > 0.0) q_idx.push_back(k);
        if (inst.b[k] > 0.0) t_idx.push_back(k);
    }
    std::vector<std::size_t> sizes(q_idx.size() + t_idx.size(), L);
    guard(inst.bank.inputs(), L, kk, 2, sizes.size() * (L - 1));
    const auto verts = simplex_vertices(inst.bank.inputs());
    const Distribution mid = midpoint(inst.P1, inst.P2);
    std::vector<Block> target, centre;
    for (std::size_t k : q_idx) {
        target.push_back(push_block(inst.P2, inst.bank[k]));
        centre.push_back(push_block(mid, inst.bank[k]));
    }
    for (std::size_t k : t_idx) {
        target.push_back(push_block(inst.P1, inst.bank[k]));
        centre.push_back(push_block(mid, inst.bank[k]));
    }
    std::vector<double> w;
    for (std::size_t k : q_idx) w.push_back(inst.a[k]);
    for (std::size_t k : t_idx) w.push_back(inst.alpha * inst.b[k]);
    std::vector<const Channel*> ch;
    for (std::size_t k : q_idx) ch.push_back(&inst.bank[k]);
    for (std::size_t k : t_idx) ch.push_back(&inst.bank[k]);
    auto F = [&](const std::vector<Block>& x) {
        double obj = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) obj += w[i] * ::ddetect::detail::kl_raw(x[i], target[i]);
        return obj;
    };
    auto G = [&](const std::vector<Block>& x) {
        std::vector<FitPiece> pieces;
        for (std::size_t i = 0; i < x.size(); ++i) pieces.push_back({&x[i], ch[i], w[i]});
        return fit_value(pieces, verts, 1e-7);
    };
    return wrap(constrained_min(sizes, target, centre, F, G, inst.lambda, resolution));
}

/// Reference f_infinity: rays over Q from P1 W, inner kappa over the slice.
inline ExponentResult f_infinity(const BinaryInstance& inst, double resolution = 1e-4) {
    const std::size_t kk = inst.bank.size(), L = inst.bank.outputs();
    std::vector<std::size_t> q_idx;
    for (std::size_t k = 0; k < kk; ++k)
        if (inst.a[k] > 0.0) q_idx.push_back(k);
    std::vector<std::size_t> sizes(q_idx.size(), L);
    guard(inst.bank.inputs(), L, kk, 2, sizes.size() * (L - 1));
    const auto verts = slice_vertices(inst.P1, inst.bank, inst.b);
    std::vector<Block> target, centre;
    for (std::size_t k : q_idx) {
        target.push_back(push_block(inst.P2, inst.bank[k]));
        centre.push_back(push_block(inst.P1, inst.bank[k]));
    }
    auto F = [&](const std::vector<Block>& x) {
        double obj = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) obj += inst.a[q_idx[i]] * ::ddetect::detail::kl_raw(x[i], target[i]);
        return obj;
    };
    auto G = [&](const std::vector<Block>& x) {
        std::vector<FitPiece> pieces;
        for (std::size_t i = 0; i < x.size(); ++i) pieces.push_back({&x[i], &inst.bank[q_idx[i]], inst.a[q_idx[i]]});
        return fit_value(pieces, verts, 1e-7);
    };
    return wrap(constrained_min(sizes, target, centre, F, G, inst.lambda, resolution));
}

/// Reference rejection exponent. For the pair (i, l), training blocks r outside
/// {i, l} are held at P_r W_k (zero objective and zero constraint contribution).
inline ExponentResult rejection(const MaryInstance& inst, std::size_t j, double resolution = 1e-4) {
    const std::size_t kk = inst.bank.size(), L = inst.bank.outputs(), m = inst.m();
    std::vector<std::size_t> q_idx, t_idx;
    for (std::size_t k = 0; k < kk; ++k) {
        if (inst.a[k] > 0.0) q_idx.push_back(k);
        if (inst.b[k] > 0.0) t_idx.push_back(k);
    }
    const std::size_t nq = q_idx.size(), nt = t_idx.size();
    std::vector<std::size_t> sizes(nq + 2 * nt, L);
    guard(inst.bank.inputs(), L, kk, m, sizes.size() * (L - 1));
    const auto verts = simplex_vertices(inst.bank.inputs());
    ExponentResult best;
    best.value = ExtendedReal::infinity();
    best.feasible = false;
    best.converged = true;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = i + 1; l < m; ++l) {
            // x = [Q_k..., Qt_i,k..., Qt_l,k...]
            std::vector<Block> target, centre;
            const Distribution mid = midpoint(inst.P[i], inst.P[l]);
            for (std::size_t k : q_idx) target.push_back(push_block(inst.P[j], inst.bank[k]));
            for (std::size_t k : t_idx) target.push_back(push_block(inst.P[i], inst.bank[k]));
            for (std::size_t k : t_idx) target.push_back(push_block(inst.P[l], inst.bank[k]));
            for (std::size_t k : q_idx) centre.push_back(push_block(mid, inst.bank[k]));
            for (std::size_t n = 0; n < 2; ++n)
                for (std::size_t k : t_idx) centre.push_back(push_block(mid, inst.bank[k]));
            auto tld = [&](bool first, const std::vector<Block>& x) {
                const std::size_t own = first ? nq : nq + nt;
                const std::size_t other = first ? nq + nt : nq;
                std::vector<FitPiece> v, u;
                for (std::size_t n = 0; n < nq; ++n) v.push_back({&x[n], &inst.bank[q_idx[n]], inst.a[q_idx[n]]});
                for (std::size_t n = 0; n < nt; ++n) {
                    const double w = inst.alpha * inst.b[t_idx[n]];
                    v.push_back({&x[own + n], &inst.bank[t_idx[n]], w});
                    u.push_back({&x[other + n], &inst.bank[t_idx[n]], w});
                }
                return fit_value(v, verts, 1e-7) + fit_value(u, verts, 1e-7);
            };
            auto F = [&](const std::vector<Block>& x) {
                double obj = 0.0;
                for (std::size_t n = 0; n < nq; ++n) obj += inst.a[q_idx[n]] * ::ddetect::detail::kl_raw(x[n], target[n]);
                for (std::size_t n = nq; n < x.size(); ++n)
                    obj += inst.alpha * inst.b[t_idx[(n - nq) % nt]] * ::ddetect::detail::kl_raw(x[n], target[n]);
                return obj;
            };
            auto G = [&](const std::vector<Block>& x) { return std::max(tld(true, x), tld(false, x)); };
            GridPoint g = constrained_min(sizes, target, centre, F, G, inst.lambda, resolution);
            if (std::isfinite(g.value) && (!best.feasible || g.value < best.value.value())) {
                best.value = ExtendedReal{g.value};
                best.feasible = true;
                best.pair = std::make_pair(i, l);
            }
        }
    return best;
}

/// Reference f_infinity_j: both kappa constraints; the ray centre is the
/// minimizer of max(kappa_i, kappa_l), found by an unconstrained zoomed lattice.
inline ExponentResult f_infinity_j(const MaryInstance& inst, std::size_t j, double resolution = 1e-4) {
    const std::size_t kk = inst.bank.size(), L = inst.bank.outputs(), m = inst.m();
    std::vector<std::size_t> q_idx;
    for (std::size_t k = 0; k < kk; ++k)
        if (inst.a[k] > 0.0) q_idx.push_back(k);
    std::vector<std::size_t> sizes(q_idx.size(), L);
    guard(inst.bank.inputs(), L, kk, m, sizes.size() * (L - 1));
    std::vector<std::vector<Block>> verts;
    for (std::size_t r = 0; r < m; ++r) verts.push_back(slice_vertices(inst.P[r], inst.bank, inst.b));
    std::vector<Block> target;
    for (std::size_t k : q_idx) target.push_back(push_block(inst.P[j], inst.bank[k]));
    auto F = [&](const std::vector<Block>& x) {
        double obj = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) obj += inst.a[q_idx[n]] * ::ddetect::detail::kl_raw(x[n], target[n]);
        return obj;
    };
    ExponentResult best;
    best.value = ExtendedReal::infinity();
    best.feasible = false;
    best.converged = true;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = i + 1; l < m; ++l) {
            auto kap = [&](std::size_t r, const std::vector<Block>& x) {
                std::vector<FitPiece> pieces;
                for (std::size_t n = 0; n < x.size(); ++n) pieces.push_back({&x[n], &inst.bank[q_idx[n]], inst.a[q_idx[n]]});
                return fit_value(pieces, verts[r], 1e-7);
            };
            auto G = [&](const std::vector<Block>& x) { return std::max(kap(i, x), kap(l, x)); };
            GridPoint c = zoom_search(sizes, G, 0.02, 1e-7);
            if (!(c.value < inst.lambda)) continue;
            GridPoint g = constrained_min(sizes, target, c.x, F, G, inst.lambda, resolution);
            if (std::isfinite(g.value) && (!best.feasible || g.value < best.value.value())) {
                best.value = ExtendedReal{g.value};
                best.feasible = true;
                best.pair = std::make_pair(i, l);
            }
        }
    return best;
}

/// Dispatchers.
inline ExponentResult grid_oracle(const BinaryInstance& inst, double resolution) { return f_alpha(inst, resolution); }
inline ExponentResult grid_oracle(const MaryInstance& inst, std::size_t j, double resolution) {
    return rejection(inst, j, resolution);
}

}  // namespace ddetect::oracle
