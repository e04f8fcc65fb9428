#include <stpp/rng.hpp>

#include <oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

using stpp::Rng;

TEST(Rng, SameSeedAndStreamSameDraws) {
    Rng a(42, 3), b(42, 3);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
    }
    Rng c(42, 4);
    Rng d(42, 3);
    EXPECT_NE(c.next_u64(), d.next_u64());
}

TEST(Rng, SerializeResumesStream) {
    Rng a(7);
    for (int i = 0; i < 17; ++i) {
        (void)a.uniform();
    }
    Rng b = Rng::deserialize(a.serialize());
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
    }
    EXPECT_THROW((void)Rng::deserialize("garbage"), std::invalid_argument);
}

TEST(Rng, SplitDoesNotAdvanceParent) {
    Rng a(5), b(5);
    Rng child = a.split(9);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(child.next_u64(), Rng(5).next_u64());
}

TEST(Rng, DistributionMoments) {
    Rng rng(1);
    const std::size_t n = 200000;
    std::vector<double> u(n), z(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = rng.uniform();
        ASSERT_GT(u[i], 0.0);
        ASSERT_LT(u[i], 1.0);
        z[i] = rng.normal();
        e[i] = rng.exponential(4.0);
    }
    const auto mu = stpp::oracle::mean_std(u);
    const auto mz = stpp::oracle::mean_std(z);
    const auto me = stpp::oracle::mean_std(e);
    EXPECT_NEAR(mu.mean, 0.5, 0.005);
    EXPECT_NEAR(mz.mean, 0.0, 0.01);
    EXPECT_NEAR(mz.std, 1.0, 0.01);
    EXPECT_NEAR(me.mean, 0.25, 0.0025);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        ++counts[rng.below(5)];
    }
    for (int c : counts) {
        EXPECT_NEAR(c, 10000, 400);
    }
    EXPECT_THROW((void)rng.below(0), std::invalid_argument);
    EXPECT_THROW((void)rng.exponential(0.0), std::invalid_argument);
}
