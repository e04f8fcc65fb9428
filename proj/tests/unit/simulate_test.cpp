#include <stpp/simulate.hpp>

#include <oracles.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace stpp;
using classical::TemporalModelParams;

namespace {

std::vector<double> intervals(const std::vector<double>& t) {
    std::vector<double> d(t.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        d[i] = t[i] - prev;
        prev = t[i];
    }
    return d;
}

}  // namespace

TEST(Thinning, PoissonMeanInterArrival) {
    Rng rng(1);
    const auto t = simulate::thinning_count(TemporalModelParams::poisson(2.0), 100000, rng);
    ASSERT_EQ(t.size(), 100000u);
    EXPECT_TRUE(std::is_sorted(t.begin(), t.end()));
    const double mean = oracle::mean_std(intervals(t)).mean;
    EXPECT_NEAR(mean, 0.5, 0.005);
}

TEST(Thinning, UnexcitedHawkesIsPoisson) {
    Rng rng(2);
    auto d = intervals(simulate::thinning_count(TemporalModelParams::hawkes(0.5, 0.0, 1.0), 10000, rng));
    std::sort(d.begin(), d.end());
    // Kolmogorov-Smirnov against Exp(0.5).
    double ks = 0.0;
    const double n = static_cast<double>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double cdf = 1.0 - std::exp(-0.5 * d[i]);
        ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
    }
    EXPECT_LT(ks, 1.628 / std::sqrt(n));
}

TEST(Thinning, HawkesStationaryRate) {
    Rng rng(3);
    const double horizon = 10000.0;
    const auto t = simulate::thinning_until(TemporalModelParams::hawkes(0.5, 0.5, 1.0), horizon, rng);
    const double rate = static_cast<double>(t.size()) / horizon;
    EXPECT_NEAR(rate, 1.0, 0.03);
    ASSERT_FALSE(t.empty());
    EXPECT_LE(t.back(), horizon);
}

TEST(Thinning, SelfCorrectingIsRegular) {
    // Inhibition makes intervals less variable than a Poisson process (CV < 1).
    Rng rng(4);
    const auto t = simulate::thinning_count(TemporalModelParams::self_correcting(0.0, 1.0, 1.0), 5000, rng);
    const auto ms = oracle::mean_std(intervals(t));
    EXPECT_NEAR(ms.mean, 1.0, 0.1);
    EXPECT_LT(ms.std / ms.mean, 0.8);
}

TEST(Thinning, ContinuesAfterHistory) {
    Rng rng(5);
    const std::vector<double> hist{0.0, 0.5, 2.0};
    const auto t = simulate::thinning_count(TemporalModelParams::hawkes(0.5, 0.5, 1.0), 10, rng, hist);
    ASSERT_EQ(t.size(), 10u);
    EXPECT_GT(t.front(), 2.0);
    const double next = simulate::sample_next_time(TemporalModelParams::poisson(1.0), hist, rng);
    EXPECT_GT(next, 2.0);
}

TEST(Thinning, EventCap) {
    Rng rng(6);
    simulate::ThinningConfig cfg;
    cfg.max_events = 10;
    try {
        (void)simulate::thinning_until(TemporalModelParams::poisson(10.0), 100.0, rng, {}, cfg);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("event cap"), std::string::npos);
    }
}

TEST(Pinwheel, DefaultCounts) {
    Rng rng(0);
    const auto pts = simulate::pinwheel_spatial({}, rng);
    ASSERT_EQ(pts.size(), 2250u);
    std::vector<int> per(15, 0);
    for (const auto& p : pts) {
        ++per.at(p.label);
    }
    for (int c : per) {
        EXPECT_EQ(c, 150);
    }
}

TEST(Pinwheel, ZeroNoiseOnSkeleton) {
    simulate::PinwheelConfig cfg;
    cfg.per_cluster = 1;
    cfg.radial_std = 0.0;
    cfg.tangential_std = 0.0;
    Rng rng(0);
    const auto pts = simulate::pinwheel_spatial(cfg, rng);
    const double step = 2.0 * std::numbers::pi / 15.0;
    for (const auto& p : pts) {
        const double angle = -step * static_cast<double>(p.label) + cfg.rate * std::exp(1.0);
        EXPECT_NEAR(p.x[0], std::cos(angle), 1e-14);
        EXPECT_NEAR(p.x[1], std::sin(angle), 1e-14);
    }
}

TEST(Pinwheel, ClockwiseClusterOrder) {
    for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
        Rng rng(seed);
        const auto pts = simulate::pinwheel_spatial({}, rng);
        std::vector<double> cx(15, 0.0), cy(15, 0.0);
        for (const auto& p : pts) {
            cx[p.label] += p.x[0];
            cy[p.label] += p.x[1];
        }
        for (std::size_t c = 0; c + 1 < 15; ++c) {
            // Angle from centroid c to c+1, wrapped to (-pi, pi]: clockwise means negative.
            double diff = std::atan2(cy[c + 1], cx[c + 1]) - std::atan2(cy[c], cx[c]);
            diff = std::remainder(diff, 2.0 * std::numbers::pi);
            EXPECT_LT(diff, 0.0) << "seed " << seed << " cluster " << c;
        }
        // Clusters are emitted in label order.
        for (std::size_t i = 1; i < pts.size(); ++i) {
            ASSERT_GE(pts[i].label, pts[i - 1].label);
        }
    }
}

TEST(Pinwheel, Validation) {
    simulate::PinwheelConfig cfg;
    cfg.n_clusters = 0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(PinwheelDataset, DefaultsAndDeterminism) {
    Rng a(8), b(8);
    const auto h = TemporalModelParams::hawkes(0.5, 0.5, 1.0);
    const auto ea = simulate::make_pinwheel_dataset({}, h, a);
    const auto eb = simulate::make_pinwheel_dataset({}, h, b);
    ASSERT_EQ(ea.size(), 2250u);
    for (std::size_t i = 0; i < ea.size(); ++i) {
        EXPECT_EQ(ea[i].m, 1.0);
        ASSERT_EQ(ea[i].t, eb[i].t);
        ASSERT_EQ(ea[i].x, eb[i].x);
    }
}

TEST(PinwheelDataset, SingleCluster) {
    simulate::PinwheelConfig cfg;
    cfg.n_clusters = 1;
    cfg.per_cluster = 5;
    Rng rng(9);
    const auto evs = simulate::make_pinwheel_dataset(cfg, TemporalModelParams::hawkes(0.5, 0.5, 1.0), rng);
    ASSERT_EQ(evs.size(), 5u);
    for (std::size_t i = 1; i < evs.size(); ++i) {
        EXPECT_GT(evs[i].t, evs[i - 1].t);
    }
    Rng again(9);
    Rng space = again.split(1);
    const auto pts = simulate::pinwheel_spatial(cfg, space);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(evs[i].x[0], pts[i].x[0]);
        EXPECT_EQ(pts[i].label, 0u);
    }
}

TEST(PairEvents, LengthMismatch) {
    const std::vector<double> t{1.0, 2.0};
    const std::vector<simulate::LabeledPoint> p(3);
    EXPECT_THROW((void)simulate::pair_events(t, p), std::invalid_argument);
}
