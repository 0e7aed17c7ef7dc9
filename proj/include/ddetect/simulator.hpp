#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ddetect/decision_rules.hpp"
#include "ddetect/exponents.hpp"
#include "ddetect/info_core.hpp"

namespace ddetect {

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream keyed by (seed, trial, role). Draw i is mix64(key + (i+1) gamma),
/// so any trial can be regenerated without replaying the others.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t role) noexcept
        : key_(mix64(mix64(mix64(seed) ^ (trial * 0xd1b54a32d192ed03ULL)) ^ (role * 0x8cb92ba72f3d8dd7ULL))) {}

    std::uint64_t next_u64() noexcept {
        counter_ += kGamma;
        return mix64(key_ + counter_);
    }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Inverse-CDF sampler over a finite alphabet.
class Sampler {
public:
    explicit Sampler(std::span<const double> p) : cdf_(p.size()) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) cdf_[i] = (s += p[i]);
        last_ = p.size() - 1;
        while (last_ > 0 && p[last_] == 0.0) --last_;
    }
    std::uint32_t operator()(Stream& rng) const noexcept {
        const double u = rng.uniform() * cdf_.back();
        std::size_t i = 0;
        while (i < last_ && u >= cdf_[i]) ++i;
        return static_cast<std::uint32_t>(i);
    }

private:
    std::vector<double> cdf_;
    std::size_t last_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration and data

struct TrialConfig {
    std::int64_t n = 1;
    double alpha = 1.0;
    std::int64_t trials = 1;
    std::uint64_t seed = 0;
    std::size_t true_hypothesis = 0;       // 0-based
    std::optional<Distribution> other;     // overrides true_hypothesis when set

    /// N = ceil(alpha n), with a relative guard against roundoff just above an integer.
    [[nodiscard]] std::int64_t training_length() const {
        const double x = alpha * static_cast<double>(n);
        return static_cast<std::int64_t>(std::ceil(x - 1e-12 * std::max(1.0, x)));
    }
    void validate() const {
        if (n < 1) throw std::invalid_argument("TrialConfig: n must be >= 1");
        if (!(alpha > 0.0) || std::isinf(alpha)) throw std::invalid_argument("TrialConfig: alpha must be positive");
        if (trials < 1) throw std::invalid_argument("TrialConfig: trials must be >= 1");
        if (training_length() < 1) throw std::invalid_argument("TrialConfig: N must be >= 1");
    }
};

/// Hypothesis laws plus the sensing configuration.
struct SimulationModel {
    std::vector<Distribution> P;
    ChannelBank bank;
    Proportions a;
    Proportions b;

    static SimulationModel of(const BinaryInstance& inst) { return {{inst.P1, inst.P2}, inst.bank, inst.a, inst.b}; }
    static SimulationModel of(const MaryInstance& inst) { return {inst.P, inst.bank, inst.a, inst.b}; }
    [[nodiscard]] std::size_t m() const noexcept { return P.size(); }
};

struct Dataset {
    PartialTypeVector test;
    std::vector<PartialTypeVector> train;
};

/// Precomputed samplers and index maps for one (model, n, N).
class Pipeline {
public:
    Pipeline(const Distribution& p_true, const std::vector<Distribution>& p_train, std::int64_t n,
             std::int64_t big_n, const ChannelBank& bank, const Proportions& a, const Proportions& b)
        : h_(index_map(n, a)), g_(index_map(big_n, b)), outputs_(bank.outputs()), test_(p_true.probs()) {
        if (p_true.size() != bank.inputs()) throw std::invalid_argument("generate_dataset: P_true size mismatch");
        if (a.size() != bank.size() || b.size() != bank.size())
            throw std::invalid_argument("generate_dataset: proportions length mismatch");
        for (const auto& p : p_train) {
            if (p.size() != bank.inputs()) throw std::invalid_argument("generate_dataset: P_train size mismatch");
            train_.emplace_back(p.probs());
        }
        for (const auto& w : bank.channels())
            for (std::size_t x = 0; x < w.inputs(); ++x) rows_.emplace_back(w.row(x));
        inputs_ = bank.inputs();
    }

    [[nodiscard]] Dataset draw(std::uint64_t seed, std::uint64_t trial) const {
        Dataset d;
        d.test = sequence(test_, h_, Stream(seed, trial, 0), Stream(seed, trial, 1));
        for (std::size_t j = 0; j < train_.size(); ++j)
            d.train.push_back(sequence(train_[j], g_, Stream(seed, trial, 2 + 2 * j), Stream(seed, trial, 3 + 2 * j)));
        return d;
    }

private:
    PartialTypeVector sequence(const Sampler& src, const IndexMap& map, Stream xs, Stream zs) const {
        PartialTypeVector t;
        t.groups.assign(map.channels(), PartialType{std::vector<std::int64_t>(outputs_, 0), 0});
        for (std::uint32_t k : map.assignment) {
            const std::uint32_t x = src(xs);
            const std::uint32_t z = rows_[k * inputs_ + x](zs);
            auto& g = t.groups[k];
            g.counts[z] += 1;
            g.total += 1;
        }
        return t;
    }

    IndexMap h_;
    IndexMap g_;
    std::size_t outputs_;
    std::size_t inputs_ = 0;
    Sampler test_;
    std::vector<Sampler> train_;
    std::vector<Sampler> rows_;
};

/// One trial of the sensing pipeline: X^n ~ P_true through W_h(i), each Y_j^N ~ P_train[j]
/// through W_g(i) with a shared g.
inline Dataset generate_dataset(const Distribution& p_true, const std::vector<Distribution>& p_train,
                                const TrialConfig& cfg, const ChannelBank& bank, const Proportions& a,
                                const Proportions& b, std::uint64_t trial = 0) {
    cfg.validate();
    return Pipeline(p_true, p_train, cfg.n, cfg.training_length(), bank, a, b).draw(cfg.seed, trial);
}

// ---------------------------------------------------------------------------
// Tests as functions of a dataset

using TestFn = std::function<TestOutcome(const Dataset&)>;

namespace detail {

inline double trial_threshold(double lambda, ThresholdMode::Kind kind, const Dataset& d, std::size_t m) {
    if (kind == ThresholdMode::Kind::raw) return lambda;
    return threshold(lambda, ThresholdMode::from_counts(d.test, d.train.front()), m);
}

}  // namespace detail

inline TestFn binary_test_fn(const BinaryInstance& inst, ThresholdMode::Kind kind = ThresholdMode::Kind::adjusted,
                             const SolverConfig& cfg = {}) {
    return [inst, kind, cfg](const Dataset& d) {
        return binary_test(d.test, d.train.at(0), d.train.at(1), inst,
                           detail::trial_threshold(inst.lambda, kind, d, 2), cfg);
    };
}

/// Gutman's test; K = 1 only.
inline TestFn gutman_binary_fn(const BinaryInstance& inst, ThresholdMode::Kind kind = ThresholdMode::Kind::adjusted) {
    if (inst.bank.size() != 1) throw std::invalid_argument("gutman_binary_fn: requires K = 1");
    return [inst, kind](const Dataset& d) {
        const double alpha = static_cast<double>(d.train.at(0).total()) / static_cast<double>(d.test.total());
        return gutman_binary(d.test.groups[0].type_or_uniform(), d.train[0].groups[0].type_or_uniform(), alpha,
                             detail::trial_threshold(inst.lambda, kind, d, 2));
    };
}

inline TestFn vi_test_fn(const BinaryInstance& inst, ThresholdMode::Kind kind = ThresholdMode::Kind::adjusted,
                         const SolverConfig& cfg = {}) {
    return [inst, kind, cfg](const Dataset& d) {
        return vi_test(d.test, d.train.at(0), inst, detail::trial_threshold(inst.lambda, kind, d, 2), cfg);
    };
}

inline TestFn unnikrishnan_test_fn(const MaryInstance& inst,
                                   ThresholdMode::Kind kind = ThresholdMode::Kind::adjusted,
                                   const SolverConfig& cfg = {}) {
    return [inst, kind, cfg](const Dataset& d) {
        return unnikrishnan_test(mary_statistics(d.test, d.train, inst, cfg),
                                 detail::trial_threshold(inst.lambda, kind, d, inst.m()));
    };
}

// ---------------------------------------------------------------------------
// Rates

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval at 95%.
inline Interval wilson_interval(std::int64_t count, std::int64_t trials) {
    if (trials < 1) throw std::invalid_argument("wilson_interval: trials must be >= 1");
    constexpr double z = 1.959963984540054;
    const double t = static_cast<double>(trials);
    const double p = static_cast<double>(count) / t;
    const double denom = 1.0 + z * z / t;
    const double centre = (p + z * z / (2.0 * t)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / t + z * z / (4.0 * t * t)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct ExponentEstimate {
    double value = 0.0;
    bool lower_bound = false;  // zero count: value is (1/n) log(trials)
};

/// Outcome tallies. counts[j] for H_{j+1}, counts[m] for Reject; failures are trials whose
/// statistic did not converge. sum(counts) + failures == trials.
struct EmpiricalRates {
    std::int64_t n = 0;
    std::int64_t trials = 0;
    std::size_t true_hypothesis = 0;
    std::vector<std::int64_t> counts;
    std::int64_t failures = 0;

    [[nodiscard]] std::size_t outcomes() const noexcept { return counts.size(); }
    [[nodiscard]] double probability(std::size_t slot) const {
        return static_cast<double>(counts.at(slot)) / static_cast<double>(trials);
    }
    [[nodiscard]] Interval interval(std::size_t slot) const { return wilson_interval(counts.at(slot), trials); }

    /// Trials deciding a hypothesis other than the true one (Reject excluded).
    [[nodiscard]] std::int64_t error_count() const {
        std::int64_t e = 0;
        for (std::size_t j = 0; j + 1 < counts.size(); ++j)
            if (j != true_hypothesis) e += counts[j];
        return e;
    }
    [[nodiscard]] double error_probability() const {
        return static_cast<double>(error_count()) / static_cast<double>(trials);
    }
    [[nodiscard]] Interval error_interval() const { return wilson_interval(error_count(), trials); }

    [[nodiscard]] ExponentEstimate exponent(std::int64_t count) const {
        const double nn = static_cast<double>(n);
        if (count == 0) return {std::log(static_cast<double>(trials)) / nn, true};
        return {-std::log(static_cast<double>(count) / static_cast<double>(trials)) / nn, false};
    }
    [[nodiscard]] ExponentEstimate error_exponent() const { return exponent(error_count()); }
};

/// Independent trials; trial t uses streams (seed, t, role), so tallies do not depend on
/// evaluation order.
inline EmpiricalRates run_trials(const SimulationModel& model, const TestFn& test, const TrialConfig& cfg) {
    cfg.validate();
    if (!cfg.other && cfg.true_hypothesis >= model.m())
        throw std::invalid_argument("run_trials: true hypothesis out of range");
    const Distribution& p_true = cfg.other ? *cfg.other : model.P[cfg.true_hypothesis];
    const Pipeline pipe(p_true, model.P, cfg.n, cfg.training_length(), model.bank, model.a, model.b);
    EmpiricalRates r;
    r.n = cfg.n;
    r.trials = cfg.trials;
    r.true_hypothesis = cfg.other ? model.m() : cfg.true_hypothesis;
    r.counts.assign(model.m() + 1, 0);
    for (std::int64_t t = 0; t < cfg.trials; ++t) {
        const Dataset d = pipe.draw(cfg.seed, static_cast<std::uint64_t>(t));
        try {
            const TestOutcome o = test(d);
            const std::size_t s = o.is_reject() ? model.m() : o.index();
            if (s > model.m()) throw std::out_of_range("run_trials: test returned an unknown hypothesis");
            r.counts[s] += 1;
        } catch (const SolverError&) {
            r.failures += 1;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Exact small-instance probabilities

/// prob[nu][s]: probability of outcome slot s (m = Reject) when the test data follow P_nu.
struct ExactRates {
    std::int64_t n = 0;
    std::int64_t big_n = 0;
    std::vector<std::vector<double>> prob;

    /// beta_nu: decide a hypothesis other than nu (Reject excluded).
    [[nodiscard]] double error(std::size_t nu) const {
        double e = 0.0;
        for (std::size_t s = 0; s + 1 < prob.at(nu).size(); ++s)
            if (s != nu) e += prob[nu][s];
        return e;
    }
    [[nodiscard]] double rejection(std::size_t nu) const { return prob.at(nu).back(); }
};

namespace detail {

inline std::vector<double> binomial_pmf(std::int64_t n, double p) {
    std::vector<double> out(static_cast<std::size_t>(n + 1));
    for (std::int64_t c = 0; c <= n; ++c) {
        const double lc = std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(c + 1)) -
                          std::lgamma(static_cast<double>(n - c + 1));
        double v;
        if (p == 0.0) v = c == 0 ? 1.0 : 0.0;
        else if (p == 1.0) v = c == n ? 1.0 : 0.0;
        else v = std::exp(lc + static_cast<double>(c) * std::log(p) + static_cast<double>(n - c) * std::log1p(-p));
        out[static_cast<std::size_t>(c)] = v;
    }
    return out;
}

inline PartialTypeVector binary_type(std::int64_t c, std::int64_t total) {
    return {{PartialType{{c, total - c}, total}}};
}

}  // namespace detail

/// Exhaustive enumeration over type triples for K = 1, L = 2, m = 2, n <= 12.
/// The test is evaluated once per triple.
inline ExactRates exact_error_probs(const SimulationModel& model, const TestFn& test, std::int64_t n, double alpha) {
    if (n < 1 || n > 12) throw std::invalid_argument("exact_error_probs: requires 1 <= n <= 12");
    if (model.bank.size() != 1) throw std::invalid_argument("exact_error_probs: requires K = 1");
    if (model.bank.outputs() != 2) throw std::invalid_argument("exact_error_probs: requires L = 2");
    if (model.m() != 2) throw std::invalid_argument("exact_error_probs: requires m = 2");
    TrialConfig cfg;
    cfg.n = n;
    cfg.alpha = alpha;
    cfg.validate();
    const std::int64_t big_n = cfg.training_length();
    const Channel& w = model.bank[0];
    std::vector<double> q;
    for (const auto& p : model.P) q.push_back(pushforward(p, w)[0]);

    std::vector<std::vector<double>> test_pmf, train_pmf;
    for (double v : q) {
        test_pmf.push_back(detail::binomial_pmf(n, v));
        train_pmf.push_back(detail::binomial_pmf(big_n, v));
    }
    ExactRates r;
    r.n = n;
    r.big_n = big_n;
    r.prob.assign(2, std::vector<double>(3, 0.0));
    for (std::int64_t c0 = 0; c0 <= n; ++c0)
        for (std::int64_t c1 = 0; c1 <= big_n; ++c1)
            for (std::int64_t c2 = 0; c2 <= big_n; ++c2) {
                const double wt = train_pmf[0][c1] * train_pmf[1][c2];
                if (wt == 0.0 && test_pmf[0][c0] == 0.0 && test_pmf[1][c0] == 0.0) continue;
                Dataset d{detail::binary_type(c0, n), {detail::binary_type(c1, big_n), detail::binary_type(c2, big_n)}};
                const TestOutcome o = test(d);
                const std::size_t s = o.is_reject() ? 2 : o.index();
                for (std::size_t nu = 0; nu < 2; ++nu) r.prob[nu][s] += test_pmf[nu][c0] * wt;
            }
    return r;
}

// ---------------------------------------------------------------------------
// Empirical exponent curves

struct CurvePoint {
    std::int64_t n = 0;
    ExponentEstimate exponent;
    EmpiricalRates rates;
};

/// Per-n Monte Carlo error exponent under cfg.true_hypothesis (type-II: true hypothesis 1).
/// cfg.n is ignored.
inline std::vector<CurvePoint> empirical_exponent_curve(const SimulationModel& model, const TestFn& test,
                                                        const std::vector<std::int64_t>& ns, TrialConfig cfg) {
    for (std::size_t i = 1; i < ns.size(); ++i)
        if (ns[i] <= ns[i - 1]) throw std::invalid_argument("empirical_exponent_curve: n list must be increasing");
    std::vector<CurvePoint> out;
    for (std::int64_t n : ns) {
        cfg.n = n;
        CurvePoint p;
        p.n = n;
        p.rates = run_trials(model, test, cfg);
        p.exponent = p.rates.error_exponent();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ddetect
