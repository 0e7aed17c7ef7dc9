#pragma once

// Finite-alphabet probability primitives: distributions, channels,
// divergences, pushforwards and per-channel (partial) empirical types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddetect/extended_real.hpp"

namespace ddetect {

inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kRenormalizeTol = 1e-9;

namespace detail {

// Validates a nonnegative vector summing to one, renormalizing small drift.
inline std::vector<double> checked_simplex(std::vector<double> p, const char* what) {
    if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty vector");
    double sum = 0.0;
    for (double& v : p) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
        if (v < 0.0) {
            if (v < -kSimplexTol) throw std::invalid_argument(std::string(what) + ": negative entry");
            v = 0.0;
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kRenormalizeTol)
        throw std::invalid_argument(std::string(what) + ": entries sum to " + std::to_string(sum));
    if (sum != 1.0)
        for (double& v : p) v /= sum;
    return p;
}

}  // namespace detail

/// Probability vector on a finite alphabet of size >= 2.
class Distribution {
public:
    Distribution() = default;
    explicit Distribution(std::vector<double> probs)
        : probs_(detail::checked_simplex(std::move(probs), "Distribution")) {
        if (probs_.size() < 2) throw std::invalid_argument("Distribution: alphabet size must be >= 2");
    }

    static Distribution uniform(std::size_t size) {
        return Distribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
    }

    static Distribution point_mass(std::size_t size, std::size_t at) {
        if (at >= size) throw std::out_of_range("Distribution::point_mass: index out of range");
        std::vector<double> p(size, 0.0);
        p[at] = 1.0;
        return Distribution(std::move(p));
    }

    [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
    [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
    [[nodiscard]] const std::vector<double>& vec() const noexcept { return probs_; }
    double operator[](std::size_t i) const { return probs_[i]; }

    [[nodiscard]] bool approx_equal(const Distribution& o, double tol) const {
        if (o.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (std::abs(probs_[i] - o.probs_[i]) > tol) return false;
        return true;
    }

    friend bool operator==(const Distribution&, const Distribution&) = default;

private:
    std::vector<double> probs_;
};

/// Row-stochastic M x L matrix W(z|x), stored row-major.
class Channel {
public:
    Channel() = default;
    Channel(std::size_t inputs, std::size_t outputs, std::vector<double> row_major)
        : inputs_(inputs), outputs_(outputs), w_(std::move(row_major)) {
        if (inputs_ < 1 || outputs_ < 2) throw std::invalid_argument("Channel: need M >= 1 and L >= 2");
        if (w_.size() != inputs_ * outputs_) throw std::invalid_argument("Channel: matrix size mismatch");
        for (std::size_t x = 0; x < inputs_; ++x) {
            std::vector<double> row(w_.begin() + static_cast<std::ptrdiff_t>(x * outputs_),
                                    w_.begin() + static_cast<std::ptrdiff_t>((x + 1) * outputs_));
            row = detail::checked_simplex(std::move(row), "Channel row");
            std::copy(row.begin(), row.end(), w_.begin() + static_cast<std::ptrdiff_t>(x * outputs_));
        }
    }

    static Channel from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::invalid_argument("Channel: no rows");
        const std::size_t l = rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * l);
        for (const auto& r : rows) {
            if (r.size() != l) throw std::invalid_argument("Channel: ragged rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return Channel(rows.size(), l, std::move(flat));
    }

    static Channel identity(std::size_t size) {
        std::vector<double> w(size * size, 0.0);
        for (std::size_t i = 0; i < size; ++i) w[i * size + i] = 1.0;
        return Channel(size, size, std::move(w));
    }

    static Channel constant_rows(std::size_t inputs, const Distribution& row) {
        std::vector<double> w;
        w.reserve(inputs * row.size());
        for (std::size_t x = 0; x < inputs; ++x) w.insert(w.end(), row.vec().begin(), row.vec().end());
        return Channel(inputs, row.size(), std::move(w));
    }

    [[nodiscard]] std::size_t inputs() const noexcept { return inputs_; }
    [[nodiscard]] std::size_t outputs() const noexcept { return outputs_; }
    [[nodiscard]] double operator()(std::size_t x, std::size_t z) const { return w_[x * outputs_ + z]; }
    [[nodiscard]] std::span<const double> row(std::size_t x) const {
        return std::span<const double>(w_).subspan(x * outputs_, outputs_);
    }

    friend bool operator==(const Channel&, const Channel&) = default;

private:
    std::size_t inputs_ = 0;
    std::size_t outputs_ = 0;
    std::vector<double> w_;
};

/// The fixed ordered set of K channels sharing input size M and output size L.
class ChannelBank {
public:
    ChannelBank() = default;
    explicit ChannelBank(std::vector<Channel> channels) : channels_(std::move(channels)) {
        if (channels_.empty()) throw std::invalid_argument("ChannelBank: K must be >= 1");
        for (const auto& w : channels_)
            if (w.inputs() != channels_.front().inputs() || w.outputs() != channels_.front().outputs())
                throw std::invalid_argument("ChannelBank: channels must share dimensions");
    }

    [[nodiscard]] std::size_t size() const noexcept { return channels_.size(); }
    [[nodiscard]] std::size_t inputs() const { return channels_.front().inputs(); }
    [[nodiscard]] std::size_t outputs() const { return channels_.front().outputs(); }
    const Channel& operator[](std::size_t k) const { return channels_.at(k); }
    [[nodiscard]] const std::vector<Channel>& channels() const noexcept { return channels_; }

private:
    std::vector<Channel> channels_;
};

/// Channel proportions on [K] (the vectors a and b).
class Proportions {
public:
    Proportions() = default;
    explicit Proportions(std::vector<double> w) : w_(detail::checked_simplex(std::move(w), "Proportions")) {}

    static Proportions basis(std::size_t k_count, std::size_t k) {
        if (k >= k_count) throw std::out_of_range("Proportions::basis: index out of range");
        std::vector<double> w(k_count, 0.0);
        w[k] = 1.0;
        return Proportions(std::move(w));
    }

    [[nodiscard]] std::size_t size() const noexcept { return w_.size(); }
    double operator[](std::size_t k) const { return w_[k]; }
    [[nodiscard]] const std::vector<double>& vec() const noexcept { return w_; }

    [[nodiscard]] bool is_deterministic() const {
        return std::any_of(w_.begin(), w_.end(), [](double v) { return v == 1.0; });
    }

    friend bool operator==(const Proportions&, const Proportions&) = default;

private:
    std::vector<double> w_;
};

/// Empirical distribution of one channel group, kept as integer counts.
struct PartialType {
    std::vector<std::int64_t> counts;  // per output symbol
    std::int64_t total = 0;

    [[nodiscard]] bool empty() const noexcept { return total == 0; }

    /// The type as a distribution; std::nullopt for an empty group.
    [[nodiscard]] std::optional<Distribution> type() const {
        if (total == 0) return std::nullopt;
        std::vector<double> p(counts.size());
        for (std::size_t z = 0; z < counts.size(); ++z)
            p[z] = static_cast<double>(counts[z]) / static_cast<double>(total);
        return Distribution(std::move(p));
    }

    /// The type, or the uniform placeholder for an empty group (carries zero weight).
    [[nodiscard]] Distribution type_or_uniform() const {
        auto t = type();
        return t ? *t : Distribution::uniform(counts.size());
    }

    friend bool operator==(const PartialType&, const PartialType&) = default;
};

/// The K per-channel types of one observed sequence.
struct PartialTypeVector {
    std::vector<PartialType> groups;

    [[nodiscard]] std::size_t channels() const noexcept { return groups.size(); }
    [[nodiscard]] std::int64_t total() const noexcept {
        std::int64_t t = 0;
        for (const auto& g : groups) t += g.total;
        return t;
    }
    /// Realized channel proportions n_k / n.
    [[nodiscard]] std::vector<double> proportions() const {
        const auto n = static_cast<double>(total());
        std::vector<double> w(groups.size(), 0.0);
        if (n > 0)
            for (std::size_t k = 0; k < groups.size(); ++k) w[k] = static_cast<double>(groups[k].total) / n;
        return w;
    }
    [[nodiscard]] std::vector<Distribution> types_or_uniform() const {
        std::vector<Distribution> out;
        out.reserve(groups.size());
        for (const auto& g : groups) out.push_back(g.type_or_uniform());
        return out;
    }

    friend bool operator==(const PartialTypeVector&, const PartialTypeVector&) = default;
};

// ---------------------------------------------------------------------------
// Divergences

namespace detail {

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

// sum_x p log(p/q) on raw spans; +inf on support violation.
inline double kl_raw(std::span<const double> p, std::span<const double> q) noexcept {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        d += p[i] * std::log(p[i] / q[i]);
    }
    return d < 0.0 ? 0.0 : d;
}

}  // namespace detail

/// D(P||Q) in nats, 0 log(0/q) = 0, +inf if supp(P) is not inside supp(Q).
inline ExtendedReal kl(const Distribution& p, const Distribution& q) {
    detail::require_same_size(p.size(), q.size(), "kl");
    return ExtendedReal{detail::kl_raw(p.probs(), q.probs())};
}

/// Generalized Jensen-Shannon divergence
/// D(Q || (Q + a Qt)/(1+a)) + a D(Qt || (Q + a Qt)/(1+a)).
inline double gjs(const Distribution& qt, const Distribution& q, double alpha) {
    detail::require_same_size(qt.size(), q.size(), "gjs");
    if (!(alpha >= 0.0)) throw std::invalid_argument("gjs: alpha must be nonnegative");
    if (alpha == 0.0) return 0.0;
    std::vector<double> mix(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) mix[i] = (q[i] + alpha * qt[i]) / (1.0 + alpha);
    return detail::kl_raw(q.probs(), mix) + alpha * detail::kl_raw(qt.probs(), mix);
}

/// Output marginal (PW)(z) = sum_x P(x) W(z|x).
inline Distribution pushforward(const Distribution& p, const Channel& w) {
    if (p.size() != w.inputs()) throw std::invalid_argument("pushforward: dimension mismatch");
    std::vector<double> out(w.outputs(), 0.0);
    for (std::size_t x = 0; x < w.inputs(); ++x) {
        if (p[x] == 0.0) continue;
        const auto r = w.row(x);
        for (std::size_t z = 0; z < w.outputs(); ++z) out[z] += p[x] * r[z];
    }
    double s = std::accumulate(out.begin(), out.end(), 0.0);
    for (double& v : out) v /= s;
    return Distribution(std::move(out));
}

/// P pushed through every channel of the bank.
inline std::vector<Distribution> pushforward_all(const Distribution& p, const ChannelBank& bank) {
    std::vector<Distribution> out;
    out.reserve(bank.size());
    for (const auto& w : bank.channels()) out.push_back(pushforward(p, w));
    return out;
}

// ---------------------------------------------------------------------------
// Index maps and partial types

/// Canonical block index map [n] -> [K] (0-based channel labels).
struct IndexMap {
    std::vector<std::int64_t> counts;       // n_k
    std::vector<std::uint32_t> assignment;  // channel of each index

    [[nodiscard]] std::size_t channels() const noexcept { return counts.size(); }
    [[nodiscard]] std::size_t length() const noexcept { return assignment.size(); }
};

/// Largest-remainder apportionment of n indices to K channels in contiguous
/// blocks. Ties in the remainder go to the lower channel index.
inline IndexMap index_map(std::int64_t n, const Proportions& a) {
    if (n < 1) throw std::invalid_argument("index_map: n must be >= 1");
    const std::size_t k_count = a.size();
    IndexMap h;
    h.counts.assign(k_count, 0);
    std::vector<double> rem(k_count);
    std::int64_t assigned = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
        const double exact = static_cast<double>(n) * a[k];
        h.counts[k] = static_cast<std::int64_t>(std::floor(exact + 1e-9));
        rem[k] = exact - static_cast<double>(h.counts[k]);
        assigned += h.counts[k];
    }
    std::vector<std::size_t> order(k_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return rem[i] > rem[j]; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) h.counts[order[r % k_count]] += 1;
    h.assignment.reserve(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < k_count; ++k)
        for (std::int64_t i = 0; i < h.counts[k]; ++i) h.assignment.push_back(static_cast<std::uint32_t>(k));
    return h;
}

/// Per-channel types of a symbol sequence over [L] (0-based symbols).
inline PartialTypeVector partial_types(std::span<const std::uint32_t> symbols,
                                       std::span<const std::uint32_t> assignment,
                                       std::size_t k_count, std::size_t alphabet) {
    if (symbols.size() != assignment.size())
        throw std::invalid_argument("partial_types: index map does not cover the sequence");
    PartialTypeVector out;
    out.groups.assign(k_count, PartialType{std::vector<std::int64_t>(alphabet, 0), 0});
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (assignment[i] >= k_count) throw std::out_of_range("partial_types: channel index out of range");
        if (symbols[i] >= alphabet) throw std::out_of_range("partial_types: symbol out of range");
        auto& g = out.groups[assignment[i]];
        g.counts[symbols[i]] += 1;
        g.total += 1;
    }
    return out;
}

inline PartialTypeVector partial_types(std::span<const std::uint32_t> symbols, const IndexMap& h,
                                       std::size_t alphabet) {
    return partial_types(symbols, h.assignment, h.channels(), alphabet);
}

}  // namespace ddetect
