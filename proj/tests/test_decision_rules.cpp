#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ddetect/decision_rules.hpp"
#include "ddetect/simulator.hpp"
#include "support.hpp"

using namespace ddetect;
using ddetect::fixtures::identity_instance;

namespace {

PartialTypeVector single(std::int64_t c0, std::int64_t c1) { return {{PartialType{{c0, c1}, c0 + c1}}}; }

Dataset draw(const BinaryInstance& inst, std::size_t truth, std::int64_t n, double alpha, std::uint64_t seed,
             std::uint64_t trial) {
    TrialConfig cfg;
    cfg.n = n;
    cfg.alpha = alpha;
    cfg.seed = seed;
    const Distribution& p = truth == 0 ? inst.P1 : inst.P2;
    return generate_dataset(p, {inst.P1, inst.P2}, cfg, inst.bank, inst.a, inst.b, trial);
}

}  // namespace

TEST(Threshold, RawAndAdjusted) {
    EXPECT_EQ(threshold(0.05, ThresholdMode::raw()), 0.05);
    const auto mode = ThresholdMode::adjusted(100, 1.0, {1.0}, {1.0}, 2);
    EXPECT_NEAR(threshold(0.05, mode), 0.05 + 2.0 * (std::log(101.0) + 2.0 * std::log(101.0)) / 100.0, 1e-14);
    EXPECT_THROW(threshold(0.0, mode), std::invalid_argument);
    EXPECT_THROW(threshold(0.05, ThresholdMode::adjusted(0, 1.0, {1.0}, {1.0}, 2)), std::invalid_argument);
}

TEST(Threshold, AdjustmentVanishes) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t n : {100, 1000, 10000, 100000, 1000000}) {
        const double d = threshold(0.05, ThresholdMode::adjusted(n, 2.0, {0.5, 0.5}, {0.3, 0.7}, 3)) - 0.05;
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Threshold, MaryUsesMLogTerms) {
    const auto mode = ThresholdMode::adjusted(50, 1.0, {1.0}, {1.0}, 2);
    EXPECT_NEAR(threshold_offset(mode, 4), 2.0 * (std::log(51.0) + 4.0 * std::log(51.0)), 1e-12);
}

TEST(BinaryTest, CommonSourceDecidesH1) {
    const auto inst = identity_instance({0.6, 0.4}, {0.2, 0.8}, 1.0, 0.01);
    EXPECT_EQ(binary_test(single(6, 4), single(6, 4), single(6, 4), inst, 0.01), TestOutcome::hypothesis(0));
}

TEST(BinaryTest, BoundaryGoesToH1) {
    const auto inst = identity_instance({0.6, 0.4}, {0.2, 0.8}, 1.0, 0.01);
    const double s = binary_statistic(single(3, 7), single(8, 2), single(3, 7), inst).value();
    EXPECT_EQ(binary_test(single(3, 7), single(8, 2), single(3, 7), inst, s), TestOutcome::hypothesis(0));
    EXPECT_EQ(binary_test(single(3, 7), single(8, 2), single(3, 7), inst, 0.99 * s), TestOutcome::hypothesis(1));
}

TEST(BinaryTest, IdentityMatchesGutmanOnRandomData) {
    std::mt19937_64 g(17);
    for (int r = 0; r < 100; ++r) {
        const auto p1 = fixtures::random_simplex(g, 2, 0.05), p2 = fixtures::random_simplex(g, 2, 0.05);
        const auto inst = identity_instance(p1, p2, 1.5, 0.02 + 0.1 * fixtures::random_simplex(g, 2)[0]);
        const Dataset d = draw(inst, r % 2, 40, 1.5, 100 + r, 0);
        const double thr = threshold(inst.lambda, ThresholdMode::raw());
        const auto a = binary_test(d.test, d.train[0], d.train[1], inst, thr);
        const auto b = gutman_binary(d.test.groups[0].type_or_uniform(), d.train[0].groups[0].type_or_uniform(), 1.5, thr);
        const double stat = gjs(d.train[0].groups[0].type_or_uniform(), d.test.groups[0].type_or_uniform(), 1.5);
        if (std::abs(stat - thr) > 1e-7) {
            EXPECT_EQ(a, b) << "dataset " << r;
        }
    }
}

TEST(GutmanBinary, Cases) {
    EXPECT_EQ(gutman_binary(Distribution({0.4, 0.6}), Distribution({0.4, 0.6}), 1.0, 0.01), TestOutcome::hypothesis(0));
    EXPECT_EQ(gutman_binary(Distribution({1.0, 0.0}), Distribution({0.0, 1.0}), 1.0, 2.0 * std::log(2.0) - 0.01),
              TestOutcome::hypothesis(1));
}

TEST(ViTest, MatchedTypesAndIdentityAgreement) {
    const auto inst = identity_instance({0.6, 0.4}, {0.2, 0.8}, 1.0, 0.03);
    EXPECT_EQ(vi_test(single(5, 5), single(5, 5), inst, 0.03), TestOutcome::hypothesis(0));
    for (int r = 0; r < 40; ++r) {
        const Dataset d = draw(inst, r % 2, 30, 1.0, 7, static_cast<std::uint64_t>(r));
        const double stat = gjs(d.train[0].groups[0].type_or_uniform(), d.test.groups[0].type_or_uniform(), 1.0);
        if (std::abs(stat - 0.03) < 1e-7) continue;
        EXPECT_EQ(vi_test(d.test, d.train[0], inst, 0.03),
                  gutman_binary(d.test.groups[0].type_or_uniform(), d.train[0].groups[0].type_or_uniform(), 1.0, 0.03));
    }
}

TEST(ViTest, StatisticIsMinLdWithoutSecondTraining) {
    ChannelBank bank({Channel::from_rows({{1, 0}, {0, 1}, {0, 1}}), Channel::from_rows({{1, 0}, {1, 0}, {0, 1}})});
    const BinaryInstance inst(Distribution({0.5, 0.3, 0.2}), Distribution({0.1, 0.2, 0.7}), bank, Proportions({0.5, 0.5}),
                              Proportions({0.5, 0.5}), 1.0, 0.05);
    const PartialTypeVector z{{PartialType{{3, 2}, 5}, PartialType{{4, 1}, 5}}};
    const PartialTypeVector y1{{PartialType{{2, 3}, 5}, PartialType{{1, 4}, 5}}};
    // With the second training sequence equal to a pushforward-consistent type its block costs nothing.
    const PartialTypeVector y2{{PartialType{{5, 0}, 5}, PartialType{{5, 0}, 5}}};
    EXPECT_NEAR(vi_statistic(z, y1, inst).value(), binary_statistic(z, y1, y2, inst).value(), 1e-7);
}

TEST(BinaryTest, WellSeparatedH2Sample) {
    const auto inst = identity_instance({0.9, 0.1}, {0.1, 0.9}, 1.0, 0.05);
    TrialConfig cfg;
    cfg.n = 200;
    cfg.alpha = 1.0;
    cfg.trials = 1000;
    cfg.seed = 99;
    cfg.true_hypothesis = 1;
    const auto r = run_trials(SimulationModel::of(inst), binary_test_fn(inst), cfg);
    EXPECT_GE(r.probability(1), 0.95);
}

TEST(OrderStatistics, TieRules) {
    const auto s = order_statistics({0.0, 0.0, 0.0});
    EXPECT_EQ(s.i1, 0u);
    EXPECT_EQ(s.i2, 1u);
    const auto t = order_statistics({0.4, 0.1});
    EXPECT_EQ(t.i1, 1u);
    EXPECT_EQ(t.i2, 0u);
    const auto u = order_statistics({0.3, 0.2, 0.2, 0.5});
    EXPECT_EQ(u.i1, 1u);
    EXPECT_EQ(u.i2, 2u);
}

TEST(MaryStatistics, MatchedTypesAreAllZero) {
    const MaryInstance mi({Distribution({0.5, 0.5}), Distribution({0.2, 0.8}), Distribution({0.9, 0.1})},
                          fixtures::identity_bank(2), Proportions({1.0}), Proportions({1.0}), 1.0, 0.05);
    const auto s = mary_statistics(single(4, 6), {single(4, 6), single(4, 6), single(4, 6)}, mi);
    for (const auto& v : s.values) EXPECT_NEAR(v.value(), 0.0, 1e-9);
    EXPECT_EQ(s.i1, 0u);
    EXPECT_EQ(s.i2, 1u);
    EXPECT_EQ(unnikrishnan_test(s, 0.05), TestOutcome::reject());
}

TEST(MaryStatistics, IdentityValuesAreGjs) {
    const MaryInstance mi({Distribution({0.5, 0.5}), Distribution({0.2, 0.8}), Distribution({0.9, 0.1})},
                          fixtures::identity_bank(2), Proportions({1.0}), Proportions({1.0}), 1.0, 0.05);
    const std::vector<PartialTypeVector> train{single(3, 7), single(8, 2), single(5, 5)};
    const auto s = mary_statistics(single(6, 4), train, mi);
    for (std::size_t j = 0; j < 3; ++j)
        EXPECT_NEAR(s.values[j].value(), gjs(train[j].groups[0].type_or_uniform(), Distribution({0.6, 0.4}), 1.0), 1e-7);
}

TEST(MaryStatistics, PermutationEquivariance) {
    const MaryInstance mi({Distribution({0.5, 0.5}), Distribution({0.2, 0.8}), Distribution({0.9, 0.1})},
                          fixtures::identity_bank(2), Proportions({1.0}), Proportions({1.0}), 1.0, 0.02);
    const std::vector<PartialTypeVector> train{single(3, 7), single(6, 4), single(9, 1)};
    const auto base = mary_statistics(single(6, 4), train, mi);
    const std::vector<std::size_t> perm{2, 0, 1};
    std::vector<PartialTypeVector> pt;
    for (std::size_t i : perm) pt.push_back(train[i]);
    const MaryInstance pm({mi.P[2], mi.P[0], mi.P[1]}, mi.bank, mi.a, mi.b, mi.alpha, mi.lambda);
    const auto s = mary_statistics(single(6, 4), pt, pm);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.values[j].value(), base.values[perm[j]].value(), 1e-9);
    const auto o = unnikrishnan_test(base, 0.02), op = unnikrishnan_test(s, 0.02);
    ASSERT_FALSE(o.is_reject());
    EXPECT_EQ(perm[op.index()], o.index());
}

TEST(Unnikrishnan, Branches) {
    EXPECT_EQ(unnikrishnan_test(order_statistics({0.0, 0.0}), 0.1), TestOutcome::reject());
    EXPECT_EQ(unnikrishnan_test(order_statistics({0.0, 5.0}), 0.1), TestOutcome::hypothesis(0));
    EXPECT_EQ(unnikrishnan_test(order_statistics({5.0, 0.0}), 0.1), TestOutcome::hypothesis(1));
    EXPECT_EQ(unnikrishnan_test(order_statistics({0.3, 0.2, 0.9}), 0.25), TestOutcome::hypothesis(1));
    EXPECT_EQ(unnikrishnan_test(order_statistics({0.3, 0.2, 0.9}), 0.3), TestOutcome::reject());
}

TEST(Unnikrishnan, RaisingThresholdOnlyMovesTowardReject) {
    std::mt19937_64 g(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int r = 0; r < 2000; ++r) {
        std::vector<ExtendedReal> v;
        for (int j = 0; j < 4; ++j) v.emplace_back(u(g));
        const auto s = order_statistics(v);
        const double t1 = u(g), t2 = t1 + 0.5 * u(g);
        const auto o1 = unnikrishnan_test(s, t1), o2 = unnikrishnan_test(s, t2);
        EXPECT_TRUE(o2.is_reject() || (!o1.is_reject() && o2 == o1));
    }
}

TEST(GutmanMary, Branches) {
    EXPECT_EQ(gutman_mary({0.5, 0.6, 0.7}, 0.1), TestOutcome::hypothesis(0));
    EXPECT_EQ(gutman_mary({0.5, 0.6, 0.05}, 0.1), TestOutcome::hypothesis(2));
    EXPECT_EQ(gutman_mary({0.05, 0.6, 0.7}, 0.1), TestOutcome::hypothesis(0));
    EXPECT_EQ(gutman_mary({0.05, 0.6, 0.07}, 0.1), TestOutcome::reject());
    EXPECT_THROW(gutman_mary({0.1}, 0.1), std::invalid_argument);
}

TEST(GutmanMary, SameRejectionRegionAsUnnikrishnan) {
    std::mt19937_64 g(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int r = 0; r < 5000; ++r) {
        const std::size_t m = 2 + static_cast<std::size_t>(r % 4);
        std::vector<double> v(m);
        std::vector<ExtendedReal> e;
        for (auto& x : v) {
            x = u(g);
            e.emplace_back(x);
        }
        const double thr = u(g);
        EXPECT_EQ(gutman_mary(v, thr).is_reject(), unnikrishnan_test(order_statistics(e), thr).is_reject());
    }
}

TEST(TestOutcome, Labels) {
    EXPECT_EQ(TestOutcome::hypothesis(0).label(), "H1");
    EXPECT_EQ(TestOutcome::reject().label(), "Reject");
    EXPECT_THROW((void)TestOutcome::reject().index(), std::logic_error);
}
