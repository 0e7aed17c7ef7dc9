#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddetect/exponents.hpp"
#include "ddetect/info_core.hpp"
#include "ddetect/solver_kernel.hpp"

namespace ddetect {

/// Thrown when a test statistic could not be computed to tolerance.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A fusion-center decision: hypothesis j (0-based) or Reject.
class TestOutcome {
public:
    static TestOutcome hypothesis(std::size_t j) { return TestOutcome(j); }
    static TestOutcome reject() { return TestOutcome(kReject); }

    [[nodiscard]] bool is_reject() const noexcept { return index_ == kReject; }
    [[nodiscard]] std::size_t index() const {
        if (is_reject()) throw std::logic_error("TestOutcome: Reject has no hypothesis index");
        return index_;
    }
    /// "H1".."Hm" (1-based) or "Reject".
    [[nodiscard]] std::string label() const { return is_reject() ? "Reject" : "H" + std::to_string(index_ + 1); }

    friend bool operator==(const TestOutcome&, const TestOutcome&) = default;

private:
    static constexpr std::size_t kReject = std::numeric_limits<std::size_t>::max();
    explicit TestOutcome(std::size_t i) : index_(i) {}
    std::size_t index_;
};

/// Threshold convention. Adjusted mode adds c_n / n to lambda.
struct ThresholdMode {
    enum class Kind { raw, adjusted };
    Kind kind = Kind::raw;
    std::int64_t n = 0;
    double alpha = 0.0;
    std::vector<double> a;
    std::vector<double> b;
    std::size_t alphabet = 0;  // L

    static ThresholdMode raw() { return {}; }
    static ThresholdMode adjusted(std::int64_t n, double alpha, std::vector<double> a, std::vector<double> b,
                                  std::size_t alphabet) {
        return {Kind::adjusted, n, alpha, std::move(a), std::move(b), alphabet};
    }
    /// Adjusted mode from realized counts: n a_k = n_k and alpha n b_k = N_k.
    static ThresholdMode from_counts(const PartialTypeVector& test, const PartialTypeVector& train) {
        if (test.channels() != train.channels()) throw std::invalid_argument("ThresholdMode: channel count mismatch");
        const std::int64_t n = test.total();
        const std::int64_t big_n = train.total();
        if (n < 1 || big_n < 1) throw std::invalid_argument("ThresholdMode: adjusted mode needs nonempty sequences");
        const std::size_t alphabet = test.groups.empty() ? 0 : test.groups.front().counts.size();
        return adjusted(n, static_cast<double>(big_n) / static_cast<double>(n), test.proportions(),
                        train.proportions(), alphabet);
    }
};

/// c_n = sum_k L (log(n a_k + 1) + m log(alpha n b_k + 1)); m = 2 for the binary test.
inline double threshold_offset(const ThresholdMode& mode, std::size_t m) {
    if (mode.n < 1 || !(mode.alpha > 0.0) || mode.alphabet < 1)
        throw std::invalid_argument("threshold: adjusted mode requires positive n, alpha and alphabet size");
    if (mode.a.size() != mode.b.size() || mode.a.empty())
        throw std::invalid_argument("threshold: adjusted mode needs matching proportion vectors");
    const double n = static_cast<double>(mode.n);
    const double L = static_cast<double>(mode.alphabet);
    double c = 0.0;
    for (std::size_t k = 0; k < mode.a.size(); ++k) {
        if (mode.a[k] < 0.0 || mode.b[k] < 0.0) throw std::invalid_argument("threshold: negative proportion");
        c += L * (std::log(n * mode.a[k] + 1.0) + static_cast<double>(m) * std::log(mode.alpha * n * mode.b[k] + 1.0));
    }
    return c;
}

inline double threshold(double lambda, const ThresholdMode& mode, std::size_t m = 2) {
    if (!(lambda > 0.0)) throw std::invalid_argument("threshold: lambda must be positive");
    if (m < 2) throw std::invalid_argument("threshold: m must be at least 2");
    if (mode.kind == ThresholdMode::Kind::raw) return lambda;
    return lambda + threshold_offset(mode, m) / static_cast<double>(mode.n);
}

namespace detail {

// Weights of the observed data: a_k = n_k / n, alpha b_k = N_k / n.
inline BinaryInstance realized(const BinaryInstance& inst, const PartialTypeVector& test,
                               const PartialTypeVector& train) {
    if (test.channels() != inst.bank.size() || train.channels() != inst.bank.size())
        throw std::invalid_argument("test: partial types do not match the channel bank");
    if (test.total() < 1 || train.total() < 1) throw std::invalid_argument("test: empty sequence");
    const double alpha = static_cast<double>(train.total()) / static_cast<double>(test.total());
    return {inst.P1, inst.P2, inst.bank, Proportions(test.proportions()), Proportions(train.proportions()), alpha,
            inst.lambda};
}

inline void check_alphabet(const PartialTypeVector& t, const ChannelBank& bank) {
    for (const auto& g : t.groups)
        if (g.counts.size() != bank.outputs()) throw std::invalid_argument("test: partial type alphabet mismatch");
}

inline void check_same_map(const PartialTypeVector& x, const PartialTypeVector& y) {
    if (x.channels() != y.channels()) throw std::invalid_argument("test: training sequences use different maps");
    for (std::size_t k = 0; k < x.channels(); ++k)
        if (x.groups[k].total != y.groups[k].total)
            throw std::invalid_argument("test: training sequences must share the index map");
}

}  // namespace detail

/// min_ld evaluated on the observed partial types.
inline ExtendedReal binary_statistic(const PartialTypeVector& test, const PartialTypeVector& train1,
                                     const PartialTypeVector& train2, const BinaryInstance& inst,
                                     const SolverConfig& cfg = {}) {
    detail::check_alphabet(test, inst.bank);
    detail::check_alphabet(train1, inst.bank);
    detail::check_alphabet(train2, inst.bank);
    detail::check_same_map(train1, train2);
    const BinaryInstance r = detail::realized(inst, test, train1);
    const MinLdResult m =
        min_ld({test.types_or_uniform(), train1.types_or_uniform(), train2.types_or_uniform()}, r, cfg);
    if (!m.converged) throw SolverError("binary_test: statistic did not converge");
    return m.value;
}

/// H1 iff min_ld <= thr (boundary goes to H1), else H2.
inline TestOutcome binary_test(const PartialTypeVector& test, const PartialTypeVector& train1,
                               const PartialTypeVector& train2, const BinaryInstance& inst, double thr,
                               const SolverConfig& cfg = {}) {
    return binary_statistic(test, train1, train2, inst, cfg) <= ExtendedReal(thr) ? TestOutcome::hypothesis(0)
                                                                                  : TestOutcome::hypothesis(1);
}

/// Classical Gutman test: H1 iff GJS(T_train1, T_test, alpha) <= thr.
inline TestOutcome gutman_binary(const Distribution& test_type, const Distribution& train1_type, double alpha,
                                 double thr) {
    return gjs(train1_type, test_type, alpha) <= thr ? TestOutcome::hypothesis(0) : TestOutcome::hypothesis(1);
}

/// min over Pt of sum_k [a_k D(T_Z,k||Pt W_k) + alpha b_k D(T_Y1,k||Pt W_k)].
inline ExtendedReal vi_statistic(const PartialTypeVector& test, const PartialTypeVector& train1,
                                 const BinaryInstance& inst, const SolverConfig& cfg = {}) {
    detail::check_alphabet(test, inst.bank);
    detail::check_alphabet(train1, inst.bank);
    const BinaryInstance r = detail::realized(inst, test, train1);
    const auto q = test.types_or_uniform();
    const auto q1 = train1.types_or_uniform();
    std::vector<const std::vector<double>*> pq, pq1;
    for (std::size_t k = 0; k < r.bank.size(); ++k) {
        pq.push_back(&q[k].vec());
        pq1.push_back(&q1[k].vec());
    }
    detail::FitObjective fit(r.bank, detail::min_ld_terms(pq, pq1, {}, r), 1);
    const KernelResult kr = fit.minimize({AffineSlice::full(r.bank.inputs())}, cfg);
    if (!kr.converged) throw SolverError("vi_test: statistic did not converge");
    return kr.value;
}

inline TestOutcome vi_test(const PartialTypeVector& test, const PartialTypeVector& train1, const BinaryInstance& inst,
                           double thr, const SolverConfig& cfg = {}) {
    return vi_statistic(test, train1, inst, cfg) <= ExtendedReal(thr) ? TestOutcome::hypothesis(0)
                                                                       : TestOutcome::hypothesis(1);
}

struct MaryStatistics {
    std::vector<ExtendedReal> values;
    std::size_t i1 = 0;
    std::size_t i2 = 1;
};

/// Smallest index of the minimum, then smallest index of the minimum over the rest.
inline MaryStatistics order_statistics(std::vector<ExtendedReal> values) {
    if (values.size() < 2) throw std::invalid_argument("mary_statistics: need at least two values");
    MaryStatistics s;
    s.values = std::move(values);
    s.i1 = 0;
    for (std::size_t j = 1; j < s.values.size(); ++j)
        if (s.values[j] < s.values[s.i1]) s.i1 = j;
    s.i2 = s.i1 == 0 ? 1 : 0;
    for (std::size_t j = 0; j < s.values.size(); ++j)
        if (j != s.i1 && s.values[j] < s.values[s.i2]) s.i2 = j;
    return s;
}

/// values[j] = tilde_ld_j on the observed types.
inline MaryStatistics mary_statistics(const PartialTypeVector& test, const std::vector<PartialTypeVector>& train,
                                      const MaryInstance& inst, const SolverConfig& cfg = {}) {
    if (train.size() != inst.m()) throw std::invalid_argument("mary_statistics: need one training sequence per hypothesis");
    detail::check_alphabet(test, inst.bank);
    for (const auto& t : train) {
        detail::check_alphabet(t, inst.bank);
        detail::check_same_map(train.front(), t);
    }
    const BinaryInstance r = detail::realized(inst.binary(), test, train.front());
    const MaryInstance ri(inst.P, inst.bank, r.a, r.b, r.alpha, inst.lambda);
    const auto q = test.types_or_uniform();
    std::vector<std::vector<Distribution>> qts;
    for (const auto& t : train) qts.push_back(t.types_or_uniform());
    std::vector<ExtendedReal> values;
    for (std::size_t j = 0; j < inst.m(); ++j) {
        const TildeLdResult tr = tilde_ld_j_full(q, qts, j, ri, cfg);
        if (!tr.converged) throw SolverError("mary_statistics: statistic did not converge");
        values.push_back(tr.value);
    }
    return order_statistics(std::move(values));
}

/// H_{i1} if values[i2] > thr, otherwise Reject.
inline TestOutcome unnikrishnan_test(const MaryStatistics& s, double thr) {
    return s.values.at(s.i2) > ExtendedReal(thr) ? TestOutcome::hypothesis(s.i1) : TestOutcome::reject();
}

/// m-ary Gutman rule on GJS values: Reject when two or more values are <= thr,
/// H_j (j >= 1) when only values[j] is, H1 otherwise.
inline TestOutcome gutman_mary(const std::vector<double>& values, double thr) {
    if (values.size() < 2) throw std::invalid_argument("gutman_mary: need at least two values");
    std::size_t below = 0;
    std::size_t last = 0;
    for (std::size_t j = 0; j < values.size(); ++j)
        if (values[j] <= thr) {
            ++below;
            last = j;
        }
    if (below >= 2) return TestOutcome::reject();
    if (below == 1 && last >= 1) return TestOutcome::hypothesis(last);
    return TestOutcome::hypothesis(0);
}

}  // namespace ddetect
