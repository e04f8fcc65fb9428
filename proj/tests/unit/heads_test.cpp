#include <stpp/grad_check.hpp>
#include <stpp/heads.hpp>
#include <stpp/rng.hpp>

#include <fixtures.hpp>
#include <oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace stpp;
using namespace stpp::heads;

namespace {

Array random_array(ad::Shape shape, Rng& rng, double scale = 1.0) {
    Array a(std::move(shape));
    for (auto& v : a.values()) {
        v = scale * rng.normal();
    }
    return a;
}

NetConfig head_cfg(std::size_t d) {
    auto c = fixtures::tiny_net(4, 3, d);
    c.flow_layers = 4;
    c.flow_hidden = 8;
    return c;
}

ParamStore head_params(const NetConfig& cfg, std::uint64_t seed, double flow_gain = 1.0) {
    ParamStore p;
    Rng rng(seed);
    init_head_params(p, cfg, rng);
    // Strengthen the coupling output layers so the flow is far from identity.
    for (auto& prm : p.items()) {
        if (prm.name.rfind("flow.", 0) == 0) {
            for (auto& v : prm.value.values()) {
                v *= flow_gain;
            }
        }
    }
    return p;
}

/// Flow as a plain function of one point, for numeric Jacobians.
std::vector<double> flow_point(const ParamStore& p, const NetConfig& cfg, const std::vector<double>& z,
                               const std::vector<double>& ctx, bool inverse) {
    Tape t;
    const std::size_t d = z.size();
    Var zv = t.constant(Array({1, d}, z));
    Var cv = t.constant(Array({1, d}, ctx));
    return (inverse ? realnvp_inv(t, p, cfg, zv, cv) : realnvp_fwd(t, p, cfg, zv, cv)).value().values();
}

}  // namespace

TEST(TimeFlows, Softsign) {
    EXPECT_EQ(softsign_fwd(1.0), 0.5);
    for (double z = 1e-3; z < 1e3; z *= 1.07) {
        EXPECT_NEAR(softsign_inv(softsign_fwd(z)), z, 1e-14 * std::max(1.0, z * z));
        const double h = 1e-6 * z;
        const double fd = std::log((softsign_fwd(z + h) - softsign_fwd(z - h)) / (2.0 * h));
        EXPECT_NEAR(softsign_logdet(z), fd, 1e-6);
    }
    EXPECT_THROW((void)softsign_fwd(0.0), std::domain_error);
    EXPECT_THROW((void)softsign_inv(1.0), std::domain_error);
    EXPECT_THROW((void)softsign_inv(-0.1), std::domain_error);
}

TEST(TimeFlows, Softplus) {
    for (double z = 1e-3; z < 300.0; z *= 1.1) {
        EXPECT_NEAR(softplus_flow_inv(softplus_flow_fwd(z)), z, 1e-10 * std::max(1.0, z));
        const double h = 1e-6 * z;
        const double fd = std::log((softplus_flow_fwd(z + h) - softplus_flow_fwd(z - h)) / (2.0 * h));
        EXPECT_NEAR(softplus_flow_logdet(z), fd, 1e-6);
    }
    EXPECT_NEAR(softplus_flow_fwd(1e-12), 0.0, 1e-12);
    EXPECT_THROW((void)softplus_flow_inv(0.0), std::domain_error);
}

TEST(ExpBase, DensityAndSampling) {
    EXPECT_NEAR(exp_logprob(1e-12, 1.0), 0.0, 1e-11);
    EXPECT_NEAR(exp_logprob(2.0, 0.5), std::log(2.0) - 4.0, 1e-15);
    EXPECT_THROW((void)exp_logprob(0.0, 1.0), std::domain_error);
    Rng rng(1);
    double acc = 0.0;
    for (int i = 0; i < 1000000; ++i) {
        acc += exp_sample(2.0, rng);
    }
    EXPECT_NEAR(acc / 1e6, 2.0, 0.02);
}

TEST(TimeDensity, SoftsignClosedForm) {
    for (double t : {0.01, 0.2, 0.5, 0.77, 0.95}) {
        const double ref = -2.0 * std::log(1.0 - t) - t / (1.0 - t);
        EXPECT_NEAR(time_logprob(t, 1.0, TimeFlow::softsign), ref, 1e-10);
    }
    EXPECT_THROW((void)time_logprob(1.0, 1.0, TimeFlow::softsign), std::domain_error);
}

TEST(TimeDensity, NormalizesForEveryScale) {
    for (double beta : {0.05, 0.3, 1.0, 2.5}) {
        const double eps = 1e-12;
        const double mass = oracle::simpson(
            [&](double t) {
                t = std::clamp(t, eps, 1.0 - eps);
                return std::exp(time_logprob(t, beta, TimeFlow::softsign));
            },
            0.0, 1.0, 200000);
        EXPECT_NEAR(mass, 1.0, 1e-6) << beta;
        // Softplus has unbounded support; substitute t = u / (1 - u).
        const double mass2 = oracle::simpson(
            [&](double u) {
                u = std::clamp(u, eps, 1.0 - 1e-9);
                const double t = u / (1.0 - u);
                return std::exp(time_logprob(t, beta, TimeFlow::softplus)) / ((1.0 - u) * (1.0 - u));
            },
            0.0, 1.0, 200000);
        EXPECT_NEAR(mass2, 1.0, 1e-4) << beta;
    }
}

TEST(TimeDensity, BatchedEqualsScalar) {
    const auto cfg = head_cfg(2);
    const auto p = head_params(cfg, 2);
    Rng rng(3);
    Tape t;
    Var beta = exp_head(t, p, t.constant(random_array({4, 3, 1}, rng)));
    ASSERT_EQ(beta.shape(), (ad::Shape{4, 3}));
    Array targets({4, 3});
    for (auto& v : targets.values()) {
        v = rng.uniform();
    }
    for (TimeFlow flow : {TimeFlow::softsign, TimeFlow::softplus}) {
        const auto lp = log_prob_time(beta, targets, flow).value();
        for (std::size_t i = 0; i < 12; ++i) {
            EXPECT_NEAR(lp[i], time_logprob(targets[i], beta.value()[i], flow), 1e-12);
        }
    }
    Array bad({4, 3}, 1.5);
    EXPECT_THROW((void)log_prob_time(beta, bad, TimeFlow::softsign), std::domain_error);
}

TEST(Mvn, PeakOfStandardNormal) {
    Tape t;
    MvnHeadOut h{t.constant(Array({1, 1, 2}, 0.0)), t.constant(Array({1, 1, 2}, 1.0)),
                 t.constant(Array({1, 1, 1}, 0.0))};
    EXPECT_NEAR(mvn_logprob(h, t.constant(Array({1, 1, 2}, 0.0))).value()[0], -std::log(2.0 * std::numbers::pi),
                1e-15);
}

TEST(Mvn, MatchesDenseInverse) {
    Rng rng(4);
    for (std::size_t d : {2u, 3u}) {
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> mu(d), diag(d), off(d * (d - 1) / 2), x(d);
            for (auto& v : mu) v = rng.normal();
            for (auto& v : diag) v = 0.3 + rng.uniform();
            for (auto& v : off) v = rng.normal();
            for (auto& v : x) v = rng.normal();
            // Sigma = L L^T assembled densely.
            std::vector<double> L(d * d, 0.0), cov(d * d, 0.0);
            for (std::size_t k = 0; k < d; ++k) {
                L[k * d + k] = diag[k];
                for (std::size_t j = 0; j < k; ++j) {
                    L[k * d + j] = off[k * (k - 1) / 2 + j];
                }
            }
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    for (std::size_t k = 0; k < d; ++k) cov[i * d + j] += L[i * d + k] * L[j * d + k];
            Tape t;
            MvnHeadOut h{t.constant(Array({1, 1, d}, mu)), t.constant(Array({1, 1, d}, diag)),
                         t.constant(Array({1, 1, off.size()}, off))};
            const double lp = mvn_logprob(h, t.constant(Array({1, 1, d}, x))).value()[0];
            EXPECT_NEAR(lp, oracle::mvn_logpdf(x, mu, cov), 1e-10);
        }
    }
}

TEST(Mvn, SampleCovariance) {
    Rng rng(5);
    const std::vector<double> mu{1.0, -2.0}, diag{0.8, 0.5}, off{0.6};
    std::vector<std::vector<double>> draws;
    draws.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) {
        draws.push_back(mvn_sample(mu, diag, off, rng));
    }
    const auto cov = oracle::covariance(draws);
    const std::vector<double> ref{0.64, 0.48, 0.48, 0.36 + 0.25};
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 4; ++k) {
        num += (cov[k] - ref[k]) * (cov[k] - ref[k]);
        den += ref[k] * ref[k];
    }
    EXPECT_LT(std::sqrt(num / den), 0.01);
}

TEST(RealNvp, ZeroWeightsIsIdentity) {
    const auto cfg = head_cfg(2);
    auto p = head_params(cfg, 6);
    for (auto& prm : p.items()) {
        if (prm.name.rfind("flow.", 0) == 0) {
            prm.value.fill(0.0);
        }
    }
    Rng rng(7);
    Tape t;
    const Array z = random_array({5, 2}, rng);
    Var ld;
    const auto x = realnvp_fwd(t, p, cfg, t.constant(z), t.constant(random_array({5, 2}, rng)), &ld).value();
    EXPECT_EQ(x.values(), z.values());
    for (double v : ld.value().values()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(RealNvp, RoundTripAndJacobian) {
    for (std::size_t d : {2u, 3u}) {
        const auto cfg = head_cfg(d);
        const auto p = head_params(cfg, 8, 8.0);
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> z(d), ctx(d);
            for (auto& v : z) v = 2.0 * rng.normal();
            for (auto& v : ctx) v = rng.normal();
            const auto x = flow_point(p, cfg, z, ctx, false);
            const auto back = flow_point(p, cfg, x, ctx, true);
            for (std::size_t k = 0; k < d; ++k) {
                EXPECT_NEAR(back[k], z[k], 1e-10);
            }
            Tape t;
            Var ld_f, ld_i;
            (void)realnvp_fwd(t, p, cfg, t.constant(Array({1, d}, z)), t.constant(Array({1, d}, ctx)), &ld_f);
            (void)realnvp_inv(t, p, cfg, t.constant(Array({1, d}, x)), t.constant(Array({1, d}, ctx)), &ld_i);
            const double num = oracle::jacobian_logdet(
                [&](const std::vector<double>& zz) { return flow_point(p, cfg, zz, ctx, false); }, z);
            EXPECT_NEAR(ld_f.value()[0], num, 1e-4 * std::max(1.0, std::abs(num)));
            EXPECT_NEAR(ld_i.value()[0], -ld_f.value()[0], 1e-10);
        }
    }
    NetConfig one = head_cfg(2);
    one.d_space = 1;
    ParamStore p;
    Tape t;
    EXPECT_THROW((void)realnvp_fwd(t, p, one, t.constant(Array({1, 1})), t.constant(Array({1, 1}))),
                 std::invalid_argument);
}

TEST(RealNvp, MasksAlternate) {
    EXPECT_EQ(coupling_mask(3, 0).values(), (std::vector<double>{1, 0, 1}));
    EXPECT_EQ(coupling_mask(3, 1).values(), (std::vector<double>{0, 1, 0}));
}

TEST(SpaceDensity, IdentityFlowReducesToGaussian) {
    auto cfg = head_cfg(2);
    auto p = head_params(cfg, 10);
    for (auto& prm : p.items()) {
        if (prm.name.rfind("flow.", 0) == 0) {
            prm.value.fill(0.0);
        }
    }
    Rng rng(11);
    Tape t;
    Var h = t.constant(random_array({2, 3, 2}, rng));
    Var tl = t.constant(random_array({2, 3, 1}, rng));
    Var x = t.constant(random_array({2, 3, 2}, rng));
    const auto a = log_prob_space(t, p, cfg, x, tl, h).value();
    const auto b = mvn_logprob(mvn_head(t, p, cfg, h, tl), x).value();
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-15);
    }
}

TEST(SpaceDensity, GridMassIsOne) {
    const auto cfg = head_cfg(2);
    const auto p = head_params(cfg, 12, 4.0);
    Rng rng(13);
    for (int trial = 0; trial < 3; ++trial) {
        const Array h = random_array({1, 1, 2}, rng);
        const Array tl({1, 1, 1}, rng.uniform());
        // Window from samples: mean +- 6 standard deviations per axis.
        Array hs({4000, 1, 2}), ts({4000, 1, 1}, tl[0]);
        for (std::size_t i = 0; i < 4000; ++i) {
            hs[2 * i] = h[0];
            hs[2 * i + 1] = h[1];
        }
        const auto s = sample_space(p, cfg, hs, ts, rng);
        std::vector<double> c0, c1;
        for (std::size_t i = 0; i < 4000; ++i) {
            c0.push_back(s[2 * i]);
            c1.push_back(s[2 * i + 1]);
        }
        const auto m0 = oracle::mean_std(c0), m1 = oracle::mean_std(c1);
        const std::size_t n = 300;
        Array grid({1, n * n, 2}), hh({1, n * n, 2}), tt({1, n * n, 1}, tl[0]);
        const double x0 = m0.mean - 6 * m0.std, y0 = m1.mean - 6 * m1.std;
        const double dx = 12 * m0.std / n, dy = 12 * m1.std / n;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t r = i * n + j;
                grid[2 * r] = x0 + (j + 0.5) * dx;
                grid[2 * r + 1] = y0 + (i + 0.5) * dy;
                hh[2 * r] = h[0];
                hh[2 * r + 1] = h[1];
            }
        }
        Tape t;
        const auto lp = log_prob_space(t, p, cfg, t.constant(grid), t.constant(tt), t.constant(hh)).value();
        double mass = 0.0;
        for (double v : lp.values()) {
            mass += std::exp(v) * dx * dy;
        }
        EXPECT_NEAR(mass, 1.0, 1e-2) << trial;
    }
}

TEST(HeadGradients, TimeAndSpace) {
    for (TimeFlow flow : {TimeFlow::softsign, TimeFlow::softplus}) {
        auto cfg = head_cfg(2);
        cfg.time_flow = flow;
        auto p = head_params(cfg, 14, 3.0);
        Rng rng(15);
        const Array h_t = random_array({2, 3, 1}, rng);
        const Array h_x = random_array({2, 3, 2}, rng);
        const Array x = random_array({2, 3, 2}, rng);
        Array tt({2, 3});
        for (auto& v : tt.values()) {
            v = 0.05 + 0.9 * rng.uniform();
        }
        const Array tl = tt.reshaped({2, 3, 1});
        auto loss = [&](Tape& t, const ParamStore& ps) {
            Var lt = log_prob_time(exp_head(t, ps, t.constant(h_t)), tt, flow);
            Var lx = log_prob_space(t, ps, cfg, t.constant(x), t.constant(tl), t.constant(h_x));
            return ad::negate(ad::mean(ad::add(lt, lx)));
        };
        const auto report = ad::grad_check(loss, p, 1e-5, 1e-4);
        EXPECT_TRUE(report.passed) << report.max_rel_error;
    }
}
