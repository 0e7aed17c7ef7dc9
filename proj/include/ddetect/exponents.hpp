#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddetect/detail/tilted.hpp"
#include "ddetect/extended_real.hpp"
#include "ddetect/info_core.hpp"
#include "ddetect/solver_kernel.hpp"

namespace ddetect {

/// Binary detection instance. Hypothesis indices in this API are 0-based:
/// P1 is hypothesis 0, P2 hypothesis 1.
struct BinaryInstance {
    Distribution P1;
    Distribution P2;
    ChannelBank bank;
    Proportions a;
    Proportions b;
    double alpha;
    double lambda;

    BinaryInstance(Distribution p1, Distribution p2, ChannelBank w, Proportions a_, Proportions b_, double alpha_,
                   double lambda_)
        : P1(std::move(p1)), P2(std::move(p2)), bank(std::move(w)), a(std::move(a_)), b(std::move(b_)),
          alpha(alpha_), lambda(lambda_) {
        if (P1.size() != bank.inputs() || P2.size() != bank.inputs())
            throw std::invalid_argument("BinaryInstance: distribution / channel input size mismatch");
        if (a.size() != bank.size() || b.size() != bank.size())
            throw std::invalid_argument("BinaryInstance: proportions length must equal the number of channels");
        if (!(alpha > 0.0) || std::isinf(alpha)) throw std::invalid_argument("BinaryInstance: alpha must be positive");
        if (!(lambda > 0.0) || std::isinf(lambda)) throw std::invalid_argument("BinaryInstance: lambda must be positive");
    }

    [[nodiscard]] BinaryInstance with_alpha(double al) const {
        return {P1, P2, bank, a, b, al, lambda};
    }
    [[nodiscard]] BinaryInstance with_lambda(double lam) const {
        return {P1, P2, bank, a, b, alpha, lam};
    }
    [[nodiscard]] BinaryInstance with_proportions(Proportions na, Proportions nb) const {
        return {P1, P2, bank, std::move(na), std::move(nb), alpha, lambda};
    }
};

/// m-ary instance with rejection; P[0..m-1].
struct MaryInstance {
    std::vector<Distribution> P;
    ChannelBank bank;
    Proportions a;
    Proportions b;
    double alpha;
    double lambda;

    MaryInstance(std::vector<Distribution> p, ChannelBank w, Proportions a_, Proportions b_, double alpha_,
                 double lambda_)
        : P(std::move(p)), bank(std::move(w)), a(std::move(a_)), b(std::move(b_)), alpha(alpha_),
          lambda(lambda_) {
        if (P.size() < 2) throw std::invalid_argument("MaryInstance: need at least two hypotheses");
        for (const auto& d : P)
            if (d.size() != bank.inputs())
                throw std::invalid_argument("MaryInstance: distribution / channel input size mismatch");
        if (a.size() != bank.size() || b.size() != bank.size())
            throw std::invalid_argument("MaryInstance: proportions length must equal the number of channels");
        if (!(alpha > 0.0) || std::isinf(alpha)) throw std::invalid_argument("MaryInstance: alpha must be positive");
        if (!(lambda > 0.0) || std::isinf(lambda)) throw std::invalid_argument("MaryInstance: lambda must be positive");
    }

    [[nodiscard]] std::size_t m() const noexcept { return P.size(); }
    [[nodiscard]] MaryInstance with_lambda(double lam) const { return {P, bank, a, b, alpha, lam}; }
    [[nodiscard]] MaryInstance with_proportions(Proportions na, Proportions nb) const {
        return {P, bank, std::move(na), std::move(nb), alpha, lambda};
    }
    /// The binary instance formed by hypotheses 0 and 1.
    [[nodiscard]] BinaryInstance binary() const { return {P[0], P[1], bank, a, b, alpha, lambda}; }
};

/// (Q, Qt1, Qt2): K distributions each on the output alphabet.
struct DistributionTriple {
    std::vector<Distribution> Q;
    std::vector<Distribution> Qt1;
    std::vector<Distribution> Qt2;
};

struct NamedDistribution {
    std::string role;
    std::vector<double> probs;
};

struct ExponentResult {
    ExtendedReal value;
    std::vector<NamedDistribution> optimizers;
    std::vector<double> duals;
    bool feasible = true;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::optional<std::pair<std::size_t, std::size_t>> pair;  // minimizing (i, l) for m-ary programs

    [[nodiscard]] const NamedDistribution* find(const std::string& role) const {
        for (const auto& o : optimizers)
            if (o.role == role) return &o;
        return nullptr;
    }
};

namespace detail {

inline void check_types(const std::vector<Distribution>& v, const ChannelBank& bank, const char* what) {
    if (v.size() != bank.size()) throw std::invalid_argument(std::string(what) + ": expected one distribution per channel");
    for (const auto& d : v)
        if (d.size() != bank.outputs()) throw std::invalid_argument(std::string(what) + ": output alphabet mismatch");
}

inline std::string indexed(const char* name, std::size_t k) { return std::string(name) + "[" + std::to_string(k + 1) + "]"; }

inline ExponentResult to_result(const TiltedProgram& prog, const DualSearch& ds, const std::vector<std::string>& block_names) {
    ExponentResult r;
    r.value = ExtendedReal{std::max(ds.best.d, 0.0)};
    for (std::size_t v = 0; v < prog.terms().size(); ++v) r.optimizers.push_back({prog.terms()[v].role, ds.best.q[v]});
    for (std::size_t b = 0; b < block_names.size(); ++b) r.optimizers.push_back({block_names[b], ds.best.p[b]});
    r.duals = ds.best.s;
    r.feasible = true;
    r.iterations = prog.iterations();
    r.residual = ds.residual;
    r.converged = ds.converged;
    return r;
}

inline DualSearch solve_one(const TiltedProgram& prog, const SolverConfig& cfg) {
    BlockSet warm;
    auto eval = [&](double s) {
        DualPoint dp = prog.evaluate({s}, cfg, warm.empty() ? nullptr : &warm);
        warm = dp.p;
        return dp;
    };
    return maximize_dual_1d(eval, 0, prog.lambda(), cfg);
}

// Nested search: outer multiplier s_0, inner s_1.
inline DualSearch solve_two(const TiltedProgram& prog, const SolverConfig& cfg) {
    BlockSet warm;
    bool inner_ok = true;
    double inner_res = 0.0;
    auto inner = [&](double s0) {
        auto eval = [&](double s1) {
            DualPoint dp = prog.evaluate({s0, s1}, cfg, warm.empty() ? nullptr : &warm);
            warm = dp.p;
            return dp;
        };
        DualSearch ds = maximize_dual_1d(eval, 1, prog.lambda(), cfg);
        inner_ok = inner_ok && ds.converged;
        inner_res = std::max(inner_res, ds.best.s[1] > 0.0 ? std::abs(ds.best.g[1] - prog.lambda()) : 0.0);
        return ds.best;
    };
    DualSearch out = maximize_dual_1d(inner, 0, prog.lambda(), cfg);
    out.converged = out.converged && inner_ok;
    const double r1 = out.best.s[1] > 0.0 ? std::abs(out.best.g[1] - prog.lambda()) : 0.0;
    out.residual = std::max(out.residual, r1);
    return out;
}

inline std::vector<Block> pushes(const Distribution& p, const ChannelBank& bank) {
    std::vector<Block> out;
    for (const auto& d : pushforward_all(p, bank)) out.push_back(d.vec());
    return out;
}

inline TiltedProgram binary_program(const BinaryInstance& inst, bool with_second_training) {
    const auto p1w = pushes(inst.P1, inst.bank);
    const auto p2w = pushes(inst.P2, inst.bank);
    const std::size_t kk = inst.bank.size();
    std::vector<TiltTerm> terms;
    for (std::size_t k = 0; k < kk; ++k) terms.push_back({indexed("Q", k), k, inst.a[k], p2w[k], {{0, 0}}});
    for (std::size_t k = 0; k < kk; ++k)
        terms.push_back({indexed("Qt1", k), k, inst.alpha * inst.b[k], p1w[k], {{0, 0}}});
    std::vector<AffineSlice> slices{AffineSlice::full(inst.bank.inputs())};
    std::vector<std::size_t> owner{0};
    if (with_second_training) {
        for (std::size_t k = 0; k < kk; ++k)
            terms.push_back({indexed("Qt2", k), k, inst.alpha * inst.b[k], p2w[k], {{0, 1}}});
        slices.push_back(AffineSlice::full(inst.bank.inputs()));
        owner.push_back(0);
    }
    return {inst.bank, std::move(terms), std::move(slices), std::move(owner), 1, inst.lambda};
}

inline std::vector<bool> positive(const Proportions& w) {
    std::vector<bool> out(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) out[k] = w[k] > 0.0;
    return out;
}

inline double golden_max(const std::function<double(double)>& f, double lo, double hi, double tol, double* arg) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > tol) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
    }
    double best = std::max(f1, f2);
    double bx = f1 >= f2 ? x1 : x2;
    const double fl = f(lo), fh = f(hi);
    if (fl > best) {
        best = fl;
        bx = lo;
    }
    if (fh > best) {
        best = fh;
        bx = hi;
    }
    if (arg) *arg = bx;
    return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LD and its minimizations.

/// sum_k [a_k D(Q_k||P W_k) + alpha b_k (D(Qt1_k||Pt1 W_k) + D(Qt2_k||Pt2 W_k))].
inline ExtendedReal ld(const DistributionTriple& t, const Distribution& P, const Distribution& Pt1,
                       const Distribution& Pt2, const BinaryInstance& inst) {
    detail::check_types(t.Q, inst.bank, "ld");
    detail::check_types(t.Qt1, inst.bank, "ld");
    detail::check_types(t.Qt2, inst.bank, "ld");
    ExtendedReal s;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        const auto& w = inst.bank[k];
        s += weighted(inst.a[k], kl(t.Q[k], pushforward(P, w)));
        s += weighted(inst.alpha * inst.b[k], kl(t.Qt1[k], pushforward(Pt1, w)));
        s += weighted(inst.alpha * inst.b[k], kl(t.Qt2[k], pushforward(Pt2, w)));
    }
    return s;
}

struct MinLdResult {
    ExtendedReal value;
    Distribution Pt;  // minimizer shared by the test data and training sequence 1
    Distribution P;   // minimizer for training sequence 2
    bool converged = false;
    double residual = 0.0;
};

namespace detail {

inline std::vector<FitTerm> min_ld_terms(const std::vector<const std::vector<double>*>& q,
                                         const std::vector<const std::vector<double>*>& qt1,
                                         const std::vector<const std::vector<double>*>& qt2,
                                         const BinaryInstance& inst) {
    std::vector<FitTerm> ft;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        ft.push_back({*q[k], k, inst.a[k], 0});
        ft.push_back({*qt1[k], k, inst.alpha * inst.b[k], 0});
        if (!qt2.empty()) ft.push_back({*qt2[k], k, inst.alpha * inst.b[k], 1});
    }
    return ft;
}

}  // namespace detail

/// min over (Pt, P) of LD(Q, Qt1, Qt2, Pt, Pt, P).
inline MinLdResult min_ld(const DistributionTriple& t, const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    detail::check_types(t.Q, inst.bank, "min_ld");
    detail::check_types(t.Qt1, inst.bank, "min_ld");
    detail::check_types(t.Qt2, inst.bank, "min_ld");
    std::vector<const std::vector<double>*> q, q1, q2;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        q.push_back(&t.Q[k].vec());
        q1.push_back(&t.Qt1[k].vec());
        q2.push_back(&t.Qt2[k].vec());
    }
    detail::FitObjective fit(inst.bank, detail::min_ld_terms(q, q1, q2, inst), 2);
    const std::size_t m = inst.bank.inputs();
    KernelResult kr = fit.minimize({AffineSlice::full(m), AffineSlice::full(m)}, cfg);
    return {kr.value, Distribution(kr.argmin[0]), Distribution(kr.argmin[1]), kr.converged, kr.residual};
}

/// The type-II exponent: min LD(Q, Qt1, Qt2, P2, P1, P2) over triples with min_ld <= lambda.
inline ExponentResult f_alpha(const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    cfg.validate();
    auto prog = detail::binary_program(inst, true);
    auto ds = detail::solve_one(prog, cfg);
    return detail::to_result(prog, ds, {"Pt", "P"});
}

/// Simplified exponent when the second training channel is assumed to be in the V_I class.
inline ExponentResult f_alpha_vi(const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    cfg.validate();
    auto prog = detail::binary_program(inst, false);
    auto ds = detail::solve_one(prog, cfg);
    return detail::to_result(prog, ds, {"Pt"});
}

/// min over Pt with Pt W_k = P1 W_k (b_k > 0) of sum_k a_k D(Q_k || Pt W_k).
inline ExtendedReal kappa(const std::vector<Distribution>& Q, const Distribution& P1, const ChannelBank& bank,
                          const Proportions& a, const Proportions& b, const SolverConfig& cfg = {}) {
    detail::check_types(Q, bank, "kappa");
    std::vector<detail::FitTerm> ft;
    for (std::size_t k = 0; k < bank.size(); ++k) ft.push_back({Q[k].vec(), k, a[k], 0});
    detail::FitObjective fit(bank, std::move(ft), 1);
    return fit.minimize({AffineSlice::matching(P1, bank, detail::positive(b))}, cfg).value;
}

inline ExtendedReal kappa(const std::vector<Distribution>& Q, const Distribution& P1, const BinaryInstance& inst,
                          const SolverConfig& cfg = {}) {
    return kappa(Q, P1, inst.bank, inst.a, inst.b, cfg);
}

/// Large-alpha limit of f_alpha; alpha is ignored.
inline ExponentResult f_infinity(const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    cfg.validate();
    const auto p2w = detail::pushes(inst.P2, inst.bank);
    std::vector<detail::TiltTerm> terms;
    for (std::size_t k = 0; k < inst.bank.size(); ++k)
        terms.push_back({detail::indexed("Q", k), k, inst.a[k], p2w[k], {{0, 0}}});
    detail::TiltedProgram prog(inst.bank, std::move(terms),
                               {AffineSlice::matching(inst.P1, inst.bank, detail::positive(inst.b))}, {0}, 1,
                               inst.lambda);
    auto ds = detail::solve_one(prog, cfg);
    return detail::to_result(prog, ds, {"Pt"});
}

/// min over Pt of sum_k [a_k D(P2 W_k || Pt W_k) + alpha b_k D(P1 W_k || Pt W_k)].
inline double g_alpha(const BinaryInstance& inst, double alpha, const SolverConfig& cfg = {}) {
    if (alpha < 0.0) throw std::invalid_argument("g_alpha: alpha must be nonnegative");
    if (alpha == 0.0) return 0.0;
    const auto p1w = pushforward_all(inst.P1, inst.bank);
    const auto p2w = pushforward_all(inst.P2, inst.bank);
    std::vector<detail::FitTerm> ft;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        ft.push_back({p2w[k].vec(), k, inst.a[k], 0});
        ft.push_back({p1w[k].vec(), k, alpha * inst.b[k], 0});
    }
    detail::FitObjective fit(inst.bank, std::move(ft), 1);
    return fit.minimize({AffineSlice::full(inst.bank.inputs())}, cfg).value.to_double();
}

struct Alpha0Result {
    ExtendedReal value;   // +inf when G stays below lambda on [0, dual_bracket_max]
    bool bracketed = true;
};

/// Root of G_alpha = lambda (G is nondecreasing in alpha with G_0 = 0).
inline Alpha0Result alpha0(const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    const double lam = inst.lambda;
    if (g_alpha(inst, cfg.dual_bracket_max, cfg) < lam) return {ExtendedReal::infinity(), false};
    double lo = 0.0, glo = -lam;
    double hi = 1.0, ghi = g_alpha(inst, hi, cfg) - lam;
    while (ghi < 0.0) {
        lo = hi;
        glo = ghi;
        hi = std::min(2.0 * hi, cfg.dual_bracket_max);
        ghi = g_alpha(inst, hi, cfg) - lam;
    }
    int side = 0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        double x = (lo * ghi - hi * glo) / (ghi - glo);
        const double w = hi - lo;
        if (!(x > lo + 0.01 * w && x < hi - 0.01 * w)) x = 0.5 * (lo + hi);
        const double gx = g_alpha(inst, x, cfg) - lam;
        if (gx == 0.0) return {ExtendedReal{x}, true};
        if (gx < 0.0) {
            lo = x;
            glo = gx;
            if (side == -1) ghi *= 0.5;
            side = -1;
        } else {
            hi = x;
            ghi = gx;
            if (side == 1) glo *= 0.5;
            side = 1;
        }
    }
    return {ExtendedReal{0.5 * (lo + hi)}, true};
}

// ---------------------------------------------------------------------------
// m-ary.

/// sum_k [a_k D(Q_k||P_j W_k) + sum_i alpha b_k D(Qt_{i,k}||P_i W_k)]; Qts[i][k].
inline ExtendedReal ld_j_m(const std::vector<Distribution>& Q, const std::vector<std::vector<Distribution>>& Qts,
                           const std::vector<Distribution>& Pvec, std::size_t j, const MaryInstance& inst) {
    if (j >= inst.m() || Qts.size() != inst.m() || Pvec.size() != inst.m())
        throw std::invalid_argument("ld_j_m: hypothesis index / count mismatch");
    detail::check_types(Q, inst.bank, "ld_j_m");
    ExtendedReal s;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        const auto& w = inst.bank[k];
        s += weighted(inst.a[k], kl(Q[k], pushforward(Pvec[j], w)));
        for (std::size_t i = 0; i < inst.m(); ++i)
            s += weighted(inst.alpha * inst.b[k], kl(Qts[i][k], pushforward(Pvec[i], w)));
    }
    return s;
}

struct TildeLdResult {
    ExtendedReal value;
    std::vector<Distribution> P;
    bool converged = false;
    double residual = 0.0;
};

/// min over (P_1..P_m) of ld_j_m, solved as m independent fits.
inline TildeLdResult tilde_ld_j_full(const std::vector<Distribution>& Q,
                                     const std::vector<std::vector<Distribution>>& Qts, std::size_t j,
                                     const MaryInstance& inst, const SolverConfig& cfg = {}) {
    if (j >= inst.m() || Qts.size() != inst.m()) throw std::invalid_argument("tilde_ld_j: hypothesis index / count mismatch");
    detail::check_types(Q, inst.bank, "tilde_ld_j");
    for (const auto& qt : Qts) detail::check_types(qt, inst.bank, "tilde_ld_j");
    std::vector<detail::FitTerm> ft;
    for (std::size_t k = 0; k < inst.bank.size(); ++k) {
        ft.push_back({Q[k].vec(), k, inst.a[k], j});
        for (std::size_t i = 0; i < inst.m(); ++i) ft.push_back({Qts[i][k].vec(), k, inst.alpha * inst.b[k], i});
    }
    detail::FitObjective fit(inst.bank, std::move(ft), inst.m());
    std::vector<AffineSlice> slices(inst.m(), AffineSlice::full(inst.bank.inputs()));
    KernelResult kr = fit.minimize(slices, cfg);
    TildeLdResult out;
    out.value = kr.value;
    for (auto& p : kr.argmin) out.P.emplace_back(std::move(p));
    out.converged = kr.converged;
    out.residual = kr.residual;
    return out;
}

inline ExtendedReal tilde_ld_j(const std::vector<Distribution>& Q, const std::vector<std::vector<Distribution>>& Qts,
                               std::size_t j, const MaryInstance& inst, const SolverConfig& cfg = {}) {
    return tilde_ld_j_full(Q, Qts, j, inst, cfg).value;
}

namespace detail {

// Program for the pair (i, l): blocks c*m + r hold the r-th source law of constraint c.
inline TiltedProgram rejection_program(const MaryInstance& inst, std::size_t j, std::size_t i, std::size_t l) {
    const std::size_t m = inst.m(), kk = inst.bank.size();
    std::vector<std::vector<Block>> pw;
    for (const auto& p : inst.P) pw.push_back(pushes(p, inst.bank));
    std::vector<TiltTerm> terms;
    for (std::size_t k = 0; k < kk; ++k) terms.push_back({indexed("Q", k), k, inst.a[k], pw[j][k], {{0, i}, {1, m + l}}});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t k = 0; k < kk; ++k)
            terms.push_back({"Qt" + std::to_string(r + 1) + "[" + std::to_string(k + 1) + "]", k,
                             inst.alpha * inst.b[k], pw[r][k], {{0, r}, {1, m + r}}});
    std::vector<AffineSlice> slices(2 * m, AffineSlice::full(inst.bank.inputs()));
    std::vector<std::size_t> owner(2 * m, 0);
    for (std::size_t r = 0; r < m; ++r) owner[m + r] = 1;
    return {inst.bank, std::move(terms), std::move(slices), std::move(owner), 2, inst.lambda};
}

inline TiltedProgram kappa_pair_program(const MaryInstance& inst, std::size_t j, std::size_t i, std::size_t l,
                                        double scale) {
    const auto pjw = pushes(inst.P[j], inst.bank);
    std::vector<TiltTerm> terms;
    for (std::size_t k = 0; k < inst.bank.size(); ++k)
        terms.push_back({indexed("Q", k), k, inst.a[k], pjw[k], {{0, 0}, {1, 1}}});
    const auto pinned = positive(inst.b);
    return {inst.bank,
            std::move(terms),
            {AffineSlice::matching(inst.P[i], inst.bank, pinned), AffineSlice::matching(inst.P[l], inst.bank, pinned)},
            {0, 1},
            2,
            inst.lambda,
            scale};
}

inline std::vector<std::string> rejection_block_names(std::size_t m, std::size_t i, std::size_t l) {
    std::vector<std::string> out;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t r = 0; r < m; ++r)
            out.push_back("P" + std::to_string(r + 1) + "@" + std::to_string((c == 0 ? i : l) + 1));
    return out;
}

}  // namespace detail

/// Rejection exponent for hypothesis j: minimum over unordered pairs i < l.
inline ExponentResult rejection_exponent(const MaryInstance& inst, std::size_t j, const SolverConfig& cfg = {}) {
    cfg.validate();
    if (j >= inst.m()) throw std::invalid_argument("rejection_exponent: hypothesis index out of range");
    ExponentResult best;
    bool have = false;
    int iters = 0;
    bool all_ok = true;
    for (std::size_t i = 0; i < inst.m(); ++i)
        for (std::size_t l = i + 1; l < inst.m(); ++l) {
            auto prog = detail::rejection_program(inst, j, i, l);
            auto ds = detail::solve_two(prog, cfg);
            ExponentResult r = detail::to_result(prog, ds, detail::rejection_block_names(inst.m(), i, l));
            r.pair = std::make_pair(i, l);
            iters += r.iterations;
            all_ok = all_ok && r.converged;
            if (!have || r.value < best.value) {
                best = std::move(r);
                have = true;
            }
        }
    best.iterations = iters;
    best.converged = all_ok;
    return best;
}

/// Feasibility threshold of the pair (i, l): the smallest lambda for which the
/// two kappa-balls intersect, max over theta of min_Q [theta k_i + (1-theta) k_l].
inline double kappa_pair_threshold(const MaryInstance& inst, std::size_t i, std::size_t l, const SolverConfig& cfg = {}) {
    auto prog = detail::kappa_pair_program(inst, i, i, l, 0.0);
    BlockSet warm;
    auto f = [&](double th) {
        KernelResult kr = convex_min_over_simplex(
            [&](const BlockSet& p, BlockSet* g) { return prog.psi({th, 1.0 - th}, p, g); }, prog.slices(), cfg,
            warm.empty() ? nullptr : &warm);
        warm = kr.argmin;
        return kr.value.to_double();
    };
    return detail::golden_max(f, 0.0, 1.0, 1e-10, nullptr);
}

/// Large-alpha limit of the rejection exponent; infeasible (+inf) when no pair's kappa-balls meet.
inline ExponentResult f_infinity_j(const MaryInstance& inst, std::size_t j, const SolverConfig& cfg = {}) {
    cfg.validate();
    if (j >= inst.m()) throw std::invalid_argument("f_infinity_j: hypothesis index out of range");
    ExponentResult best;
    best.value = ExtendedReal::infinity();
    best.feasible = false;
    best.converged = true;
    int iters = 0;
    bool all_ok = true;
    for (std::size_t i = 0; i < inst.m(); ++i)
        for (std::size_t l = i + 1; l < inst.m(); ++l) {
            if (kappa_pair_threshold(inst, i, l, cfg) > inst.lambda) continue;
            auto prog = detail::kappa_pair_program(inst, j, i, l, 1.0);
            auto ds = detail::solve_two(prog, cfg);
            ExponentResult r = detail::to_result(prog, ds, {"Pt@" + std::to_string(i + 1), "Pt@" + std::to_string(l + 1)});
            r.pair = std::make_pair(i, l);
            iters += r.iterations;
            all_ok = all_ok && r.converged;
            if (!best.feasible || r.value < best.value) best = std::move(r);
        }
    best.iterations = iters;
    best.converged = all_ok;
    return best;
}

// ---------------------------------------------------------------------------
// Closed-form limits.

struct ChannelMax {
    ExtendedReal value;
    std::size_t argmax = 0;  // smallest maximizing channel index
};

/// max_k D(P1 W_k || P2 W_k).
inline ChannelMax np_limit_argmax(const Distribution& P1, const Distribution& P2, const ChannelBank& bank) {
    ChannelMax out;
    for (std::size_t k = 0; k < bank.size(); ++k) {
        ExtendedReal v = kl(pushforward(P1, bank[k]), pushforward(P2, bank[k]));
        if (k == 0 || v > out.value) out = {v, k};
    }
    return out;
}

inline ExtendedReal np_limit(const BinaryInstance& inst) { return np_limit_argmax(inst.P1, inst.P2, inst.bank).value; }

/// Chernoff information max_rho -log sum_z q2^rho q1^(1-rho).
inline double chernoff_information(const Distribution& q1, const Distribution& q2, double* rho_star = nullptr) {
    auto f = [&](double rho) {
        double s = 0.0;
        for (std::size_t z = 0; z < q1.size(); ++z) {
            if (q1[z] == 0.0 && rho < 1.0) continue;
            if (q2[z] == 0.0 && rho > 0.0) continue;
            s += std::pow(q2[z], rho) * std::pow(q1[z], 1.0 - rho);
        }
        return s > 0.0 ? -std::log(s) : detail::kInf;
    };
    return std::max(0.0, detail::golden_max(f, 0.0, 1.0, 1e-12, rho_star));
}

inline ChannelMax chernoff_argmax(const Distribution& P1, const Distribution& P2, const ChannelBank& bank) {
    ChannelMax out;
    for (std::size_t k = 0; k < bank.size(); ++k) {
        double v = chernoff_information(pushforward(P1, bank[k]), pushforward(P2, bank[k]));
        if (k == 0 || ExtendedReal{v} > out.value) out = {ExtendedReal{v}, k};
    }
    return out;
}

inline double chernoff_star(const BinaryInstance& inst) {
    return chernoff_argmax(inst.P1, inst.P2, inst.bank).value.to_double();
}

// ---------------------------------------------------------------------------
// Single identity channel: min D(Q||P2) + alpha D(Qt||P1) s.t. GJS(Qt, Q, alpha) <= lambda,
// solved by alternating closed-form updates of (Q, Qt) and the mixture.

inline ExponentResult gutman_exponent(const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    if (inst.bank.size() != 1 || !detail::is_identity(inst.bank[0]))
        throw std::invalid_argument("gutman_exponent: needs a single identity channel");
    const std::size_t L = inst.P1.size();
    const double al = inst.alpha, lam = inst.lambda;
    const auto& p1 = inst.P1.vec();
    const auto& p2 = inst.P2.vec();
    int iters = 0;
    Block q = p2, qt = p1;
    auto normalize_geo = [&](const Block& t, const Block& mix, double s, Block& out) {
        double mx = detail::kNegInf;
        Block lg(L);
        for (std::size_t z = 0; z < L; ++z) {
            lg[z] = (t[z] > 0.0 && mix[z] > 0.0) ? (std::log(t[z]) + s * std::log(mix[z])) / (1.0 + s) : detail::kNegInf;
            mx = std::max(mx, lg[z]);
        }
        double sum = 0.0;
        for (std::size_t z = 0; z < L; ++z) {
            out[z] = lg[z] == detail::kNegInf ? 0.0 : std::exp(lg[z] - mx);
            sum += out[z];
        }
        for (double& v : out) v /= sum;
    };
    auto gjs_raw = [&](const Block& a_t, const Block& a_q) {
        Block mix(L);
        for (std::size_t z = 0; z < L; ++z) mix[z] = (a_q[z] + al * a_t[z]) / (1.0 + al);
        return detail::kl_raw(a_q, mix) + al * detail::kl_raw(a_t, mix);
    };
    auto eval = [&](double s) {
        detail::DualPoint dp;
        dp.s = {s};
        if (s == 0.0) {
            q = p2;
            qt = p1;
        } else {
            Block mix(L), nq(L), nqt(L);
            for (int it = 0; it < cfg.max_iters * 10; ++it) {
                for (std::size_t z = 0; z < L; ++z) mix[z] = (q[z] + al * qt[z]) / (1.0 + al);
                normalize_geo(p2, mix, s, nq);
                normalize_geo(p1, mix, s, nqt);
                double delta = 0.0;
                for (std::size_t z = 0; z < L; ++z) delta = std::max({delta, std::abs(nq[z] - q[z]), std::abs(nqt[z] - qt[z])});
                q = nq;
                qt = nqt;
                ++iters;
                if (delta < 1e-15) break;
            }
        }
        dp.objective = detail::kl_raw(q, p2) + al * detail::kl_raw(qt, p1);
        dp.g = {gjs_raw(qt, q)};
        dp.d = dp.objective + s * (dp.g[0] - lam);
        dp.q = {q, qt};
        return dp;
    };
    auto ds = detail::maximize_dual_1d(eval, 0, lam, cfg);
    ExponentResult r;
    r.value = ExtendedReal{std::max(ds.best.d, 0.0)};
    r.optimizers = {{"Q[1]", ds.best.q[0]}, {"Qt1[1]", ds.best.q[1]}};
    r.duals = ds.best.s;
    r.iterations = iters;
    r.residual = ds.residual;
    r.converged = ds.converged;
    return r;
}

}  // namespace ddetect
