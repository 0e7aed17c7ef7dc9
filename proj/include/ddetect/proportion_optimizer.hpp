#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ddetect/exponents.hpp"
#include "ddetect/info_core.hpp"
#include "ddetect/solver_kernel.hpp"

namespace ddetect {

/// Lattice on the simplex P([K]) with spacing `resolution` (1/resolution must be an integer).
class SweepGrid {
public:
    SweepGrid(double resolution, std::size_t dimension) : resolution_(resolution), dimension_(dimension) {
        if (!(resolution > 0.0) || resolution > 0.5) throw std::invalid_argument("SweepGrid: resolution must lie in (0, 0.5]");
        if (dimension < 1) throw std::invalid_argument("SweepGrid: dimension must be >= 1");
        const double s = 1.0 / resolution;
        steps_ = static_cast<int>(std::lround(s));
        if (std::abs(s - steps_) > 1e-9 * s) throw std::invalid_argument("SweepGrid: 1/resolution must be an integer");
    }

    [[nodiscard]] double resolution() const noexcept { return resolution_; }
    [[nodiscard]] std::size_t dimension() const noexcept { return dimension_; }
    [[nodiscard]] int steps() const noexcept { return steps_; }

    /// All lattice points in lexicographic order of their coordinates.
    [[nodiscard]] std::vector<std::vector<double>> points() const {
        std::vector<std::vector<double>> out;
        std::vector<int> c(dimension_, 0);
        enumerate(c, 0, steps_, out);
        return out;
    }

private:
    void enumerate(std::vector<int>& c, std::size_t pos, int left, std::vector<std::vector<double>>& out) const {
        if (pos + 1 == dimension_) {
            c[pos] = left;
            std::vector<double> p(dimension_);
            for (std::size_t k = 0; k < dimension_; ++k) p[k] = static_cast<double>(c[k]) / steps_;
            out.push_back(std::move(p));
            return;
        }
        for (int v = 0; v <= left; ++v) {
            c[pos] = v;
            enumerate(c, pos + 1, left - v, out);
        }
    }

    double resolution_;
    std::size_t dimension_;
    int steps_ = 0;
};

enum class ExponentSelector { f_alpha, f_alpha_vi, f_infinity, rejection, f_infinity_j };

struct SweepRow {
    std::vector<double> a;
    std::vector<double> b;
    ExtendedReal value;
    bool feasible = true;
    bool converged = false;
};

struct SweepResult {
    std::size_t K = 0;
    double resolution = 0.0;
    std::vector<SweepRow> rows;
    std::vector<std::size_t> argmax;  // rows within the tie tolerance of the maximum
    std::size_t witness = 0;          // the tied row nearest a corner pair
    ExtendedReal max_value;
    bool is_corner = false;
    std::optional<std::pair<std::size_t, std::size_t>> corner;  // (j, k): a near e_j, b near e_k
    bool all_infeasible = false;
    std::size_t failures = 0;
};

struct SweepOptions {
    double tie_tol = 1e-6;        // relative to max(1, max value)
    std::size_t hypothesis = 0;   // j for the rejection selectors
};

namespace detail {

inline std::size_t argmax_index(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// max over (j, k) of the l-infinity distance to (e_j, e_k); ||a - e_j|| = 1 - a_j.
inline double corner_distance(const SweepRow& r) {
    const double da = 1.0 - r.a[argmax_index(r.a)];
    const double db = 1.0 - r.b[argmax_index(r.b)];
    return std::max(da, db);
}

using PointEval = std::function<ExponentResult(const Proportions&, const Proportions&)>;

inline SweepResult sweep(std::size_t K, double resolution, const PointEval& eval, const SweepOptions& opt) {
    if (resolution <= 0.05 + 1e-12 && K > 3)
        throw std::invalid_argument("sweep_ab: K <= 3 required at resolutions <= 0.05");
    const SweepGrid grid(resolution, K);
    const auto pts = grid.points();
    SweepResult out;
    out.K = K;
    out.resolution = resolution;
    out.rows.reserve(pts.size() * pts.size());
    for (const auto& a : pts)
        for (const auto& b : pts) {
            SweepRow row{a, b, {}, true, false};
            try {
                const ExponentResult r = eval(Proportions(a), Proportions(b));
                row.value = r.value;
                row.feasible = r.feasible;
                row.converged = r.converged;
            } catch (const std::exception&) {
                row.converged = false;
            }
            if (!row.converged) out.failures += 1;
            out.rows.push_back(std::move(row));
        }

    double best = -1.0;
    for (const auto& r : out.rows)
        if (r.feasible && r.converged && r.value.is_finite()) best = std::max(best, r.value.value());
    if (best < 0.0) {
        out.all_infeasible = true;
        return out;
    }
    const double tol = opt.tie_tol * std::max(1.0, best);
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        const auto& r = out.rows[i];
        if (r.feasible && r.converged && r.value.is_finite() && r.value.value() >= best - tol) out.argmax.push_back(i);
    }
    out.witness = out.argmax.front();
    for (std::size_t i : out.argmax)
        if (corner_distance(out.rows[i]) < corner_distance(out.rows[out.witness])) out.witness = i;
    const SweepRow& w = out.rows[out.witness];
    out.max_value = w.value;
    out.is_corner = corner_distance(w) <= resolution + 1e-9;
    if (out.is_corner) out.corner = std::make_pair(argmax_index(w.a), argmax_index(w.b));
    return out;
}

}  // namespace detail

/// The selected exponent on every lattice pair (a, b); argmax and its corner status.
inline SweepResult sweep_ab(const BinaryInstance& tmpl, double resolution, ExponentSelector selector,
                            const SolverConfig& cfg = {}, const SweepOptions& opt = {}) {
    const std::size_t j = opt.hypothesis;
    if (j > 1) throw std::invalid_argument("sweep_ab: hypothesis index must be 0 or 1");
    detail::PointEval eval = [&](const Proportions& a, const Proportions& b) -> ExponentResult {
        const BinaryInstance inst = tmpl.with_proportions(a, b);
        switch (selector) {
            case ExponentSelector::f_alpha: return f_alpha(inst, cfg);
            case ExponentSelector::f_alpha_vi: return f_alpha_vi(inst, cfg);
            case ExponentSelector::f_infinity: return f_infinity(inst, cfg);
            case ExponentSelector::rejection:
                return rejection_exponent(MaryInstance({inst.P1, inst.P2}, inst.bank, a, b, inst.alpha, inst.lambda), j, cfg);
            case ExponentSelector::f_infinity_j:
                return f_infinity_j(MaryInstance({inst.P1, inst.P2}, inst.bank, a, b, inst.alpha, inst.lambda), j, cfg);
        }
        throw std::invalid_argument("sweep_ab: unknown selector");
    };
    return detail::sweep(tmpl.bank.size(), resolution, eval, opt);
}

inline SweepResult sweep_ab(const MaryInstance& tmpl, double resolution, ExponentSelector selector,
                            const SolverConfig& cfg = {}, const SweepOptions& opt = {}) {
    if (opt.hypothesis >= tmpl.m()) throw std::invalid_argument("sweep_ab: hypothesis index out of range");
    if (selector != ExponentSelector::rejection && selector != ExponentSelector::f_infinity_j)
        throw std::invalid_argument("sweep_ab: m-ary instances support the rejection selectors only");
    detail::PointEval eval = [&](const Proportions& a, const Proportions& b) -> ExponentResult {
        const MaryInstance inst = tmpl.with_proportions(a, b);
        return selector == ExponentSelector::rejection ? rejection_exponent(inst, opt.hypothesis, cfg)
                                                       : f_infinity_j(inst, opt.hypothesis, cfg);
    };
    return detail::sweep(tmpl.bank.size(), resolution, eval, opt);
}

struct AlphaRow {
    double alpha = 0.0;
    ExtendedReal f_alpha;
    bool below_alpha0 = false;
    double gap = 0.0;  // f_infinity - f_alpha
    bool converged = false;
};

struct AlphaSweep {
    std::vector<AlphaRow> rows;
    ExponentResult f_infinity;
    Alpha0Result alpha0;
};

/// f_alpha along an increasing alpha list with the f_infinity asymptote and the alpha0 marker.
inline AlphaSweep sweep_alpha(const BinaryInstance& tmpl, const std::vector<double>& alphas,
                              const SolverConfig& cfg = {}) {
    if (alphas.empty()) throw std::invalid_argument("sweep_alpha: empty alpha list");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0) || std::isinf(alphas[i])) throw std::invalid_argument("sweep_alpha: alpha must be positive");
        if (i > 0 && alphas[i] <= alphas[i - 1]) throw std::invalid_argument("sweep_alpha: alpha list must be increasing");
    }
    AlphaSweep out;
    out.f_infinity = f_infinity(tmpl, cfg);
    out.alpha0 = alpha0(tmpl, cfg);
    const double finf = out.f_infinity.value.to_double();
    for (double al : alphas) {
        AlphaRow row;
        row.alpha = al;
        row.below_alpha0 = out.alpha0.value.is_infinite() || al <= out.alpha0.value.value();
        try {
            const ExponentResult r = f_alpha(tmpl.with_alpha(al), cfg);
            row.f_alpha = r.value;
            row.converged = r.converged;
            row.gap = finf - r.value.to_double();
        } catch (const std::exception&) {
            row.converged = false;
        }
        out.rows.push_back(row);
    }
    return out;
}

/// True iff every output symbol z has an input x with V(z|x) = 1.
inline bool is_in_vi(const Channel& v) {
    for (std::size_t z = 0; z < v.outputs(); ++z) {
        bool hit = false;
        for (std::size_t x = 0; x < v.inputs() && !hit; ++x) hit = std::abs(v(x, z) - 1.0) <= 1e-12;
        if (!hit) return false;
    }
    return true;
}

struct MaryCornerReport {
    SweepResult sweep;
    bool asserted = false;         // m = 2
    bool assertion_holds = false;  // argmax at a = b = e_k
};

/// f_infinity_j over the lattice for hypothesis j at the given lambda.
inline MaryCornerReport corner_report_mary(const MaryInstance& inst, double lambda, double resolution,
                                           std::size_t j = 0, const SolverConfig& cfg = {}) {
    SweepOptions opt;
    opt.hypothesis = j;
    MaryCornerReport r;
    r.sweep = sweep_ab(inst.with_lambda(lambda), resolution, ExponentSelector::f_infinity_j, cfg, opt);
    r.asserted = inst.m() == 2;
    r.assertion_holds = r.asserted && r.sweep.is_corner && r.sweep.corner->first == r.sweep.corner->second;
    return r;
}

/// max over k of f_infinity(e_k, e_k, lambda).
inline ChannelMax corner_f_infinity(const BinaryInstance& inst, double lambda, const SolverConfig& cfg = {}) {
    ChannelMax out;
    double best = -1.0;
    const std::size_t K = inst.bank.size();
    for (std::size_t k = 0; k < K; ++k) {
        const BinaryInstance ik = inst.with_lambda(lambda).with_proportions(Proportions::basis(K, k), Proportions::basis(K, k));
        const double v = f_infinity(ik, cfg).value.to_double();
        if (v > best) {
            best = v;
            out.argmax = k;
        }
    }
    out.value = best;
    return out;
}

struct NpBayesReport {
    ChannelMax np;
    ChannelMax chernoff;
    std::vector<std::pair<double, double>> np_path;  // (lambda, max_k f_infinity(e_k, e_k, lambda))
    double fixed_point = 0.0;                        // lambda* with max_k f_infinity(e_k, e_k, lambda*) = lambda*
    double fixed_point_residual = 0.0;
    bool bracketed = false;
};

/// Closed-form limits and the f_infinity cross-checks.
inline NpBayesReport np_bayes_report(const BinaryInstance& inst, const std::vector<double>& np_lambdas = {1e-2, 1e-3},
                                     const SolverConfig& cfg = {}) {
    NpBayesReport r;
    r.np = np_limit_argmax(inst.P1, inst.P2, inst.bank);
    r.chernoff = chernoff_argmax(inst.P1, inst.P2, inst.bank);
    for (double lam : np_lambdas) r.np_path.emplace_back(lam, corner_f_infinity(inst, lam, cfg).value.to_double());

    auto h = [&](double lam) { return corner_f_infinity(inst, lam, cfg).value.to_double() - lam; };
    double lo = 1e-9;
    double hi = r.np.value.is_finite() ? r.np.value.value() : 1e3;
    if (!(hi > lo)) return r;
    double hlo = h(lo);
    double hhi = h(hi);
    r.bracketed = hlo > 0.0 && hhi < 0.0;
    if (!r.bracketed) return r;
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double hm = h(mid);
        r.fixed_point_residual = std::abs(hm);
        if (hm > 0.0) lo = mid;
        else hi = mid;
        if (hi - lo <= 1e-9 && r.fixed_point_residual <= 1e-5) break;
    }
    r.fixed_point = mid;
    return r;
}

}  // namespace ddetect
