#pragma once

#include <cmath>
#include <compare>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace ddetect {

/// Nonnegative real number extended with +infinity.
///
/// Divergences and exponents in this library are either finite and nonnegative
/// or +infinity (support violations, infeasible programs). The infinite state is
/// a flag, never a large magnitude, and it absorbs under addition.
class ExtendedReal {
public:
    constexpr ExtendedReal() noexcept = default;
    constexpr ExtendedReal(double v) : value_(v) {  // NOLINT(google-explicit-constructor)
        if (std::isinf(v) && v > 0) {
            infinite_ = true;
            value_ = 0.0;
        } else if (!(v >= 0.0)) {
            throw std::invalid_argument("ExtendedReal: value must be nonnegative");
        }
    }

    static constexpr ExtendedReal infinity() noexcept {
        ExtendedReal r;
        r.infinite_ = true;
        return r;
    }

    [[nodiscard]] constexpr bool is_finite() const noexcept { return !infinite_; }
    [[nodiscard]] constexpr bool is_infinite() const noexcept { return infinite_; }

    /// Finite value; throws if infinite.
    [[nodiscard]] double value() const {
        if (infinite_) throw std::domain_error("ExtendedReal: value() on +infinity");
        return value_;
    }

    /// IEEE view, +inf for the infinite state. For numerical kernels only.
    [[nodiscard]] constexpr double to_double() const noexcept {
        return infinite_ ? std::numeric_limits<double>::infinity() : value_;
    }

    constexpr ExtendedReal& operator+=(const ExtendedReal& o) noexcept {
        if (infinite_ || o.infinite_) {
            infinite_ = true;
            value_ = 0.0;
        } else {
            value_ += o.value_;
        }
        return *this;
    }

    friend constexpr ExtendedReal operator+(ExtendedReal a, const ExtendedReal& b) noexcept {
        a += b;
        return a;
    }

    /// Weighted term: a zero weight contributes exactly 0, even against +infinity.
    friend constexpr ExtendedReal weighted(double w, const ExtendedReal& x) {
        if (w == 0.0) return ExtendedReal{};
        if (w < 0.0) throw std::invalid_argument("weighted: negative weight");
        if (x.infinite_) return infinity();
        return ExtendedReal{w * x.value_};
    }

    friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) noexcept {
        return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
    }

    friend constexpr std::partial_ordering operator<=>(const ExtendedReal& a,
                                                       const ExtendedReal& b) noexcept {
        if (a.infinite_ && b.infinite_) return std::partial_ordering::equivalent;
        if (a.infinite_) return std::partial_ordering::greater;
        if (b.infinite_) return std::partial_ordering::less;
        return a.value_ <=> b.value_;
    }

    friend std::ostream& operator<<(std::ostream& os, const ExtendedReal& x) {
        if (x.infinite_) return os << "inf";
        return os << x.value_;
    }

private:
    double value_ = 0.0;
    bool infinite_ = false;
};

}  // namespace ddetect
