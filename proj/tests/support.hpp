#pragma once

#include <random>
#include <vector>

#include "ddetect/exponents.hpp"

namespace ddetect::fixtures {

inline std::vector<double> random_simplex(std::mt19937_64& g, std::size_t n, double floor = 0.0) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) {
        x = e(g) + floor;
        s += x;
    }
    for (auto& x : v) x /= s;
    return v;
}

inline Distribution random_distribution(std::mt19937_64& g, std::size_t n, double floor = 0.01) {
    return Distribution(random_simplex(g, n, floor));
}

inline ChannelBank identity_bank(std::size_t size) { return ChannelBank({Channel::identity(size)}); }

inline BinaryInstance identity_instance(std::vector<double> p1, std::vector<double> p2, double alpha, double lambda) {
    return {Distribution(std::move(p1)), Distribution(std::move(p2)), identity_bank(2), Proportions({1.0}),
            Proportions({1.0}), alpha, lambda};
}

inline ChannelBank stochastic_bank3() {
    return ChannelBank({Channel::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.5, 0.5}}),
                        Channel::from_rows({{0.6, 0.4}, {0.1, 0.9}, {0.3, 0.7}}),
                        Channel::from_rows({{0.7, 0.3}, {0.7, 0.3}, {0.1, 0.9}})});
}

inline ChannelBank deterministic_bank3() {
    return ChannelBank({Channel::from_rows({{1, 0}, {0, 1}, {0, 1}}), Channel::from_rows({{1, 0}, {1, 0}, {0, 1}}),
                        Channel::from_rows({{0, 1}, {1, 0}, {0, 1}})});
}

inline ChannelBank first_channels(const ChannelBank& bank, std::size_t k) {
    std::vector<Channel> ch(bank.channels().begin(), bank.channels().begin() + static_cast<std::ptrdiff_t>(k));
    return ChannelBank(std::move(ch));
}

inline Proportions uniform_proportions(std::size_t k) { return Proportions(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

}  // namespace ddetect::fixtures
