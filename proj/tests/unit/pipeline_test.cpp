#include <stpp/pipeline.hpp>

#include <fixtures.hpp>
#include <oracles.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

using namespace stpp;
using pipeline::BaselineKind;

namespace {

const fixtures::PinwheelSplit& data() {
    static const auto d = fixtures::pinwheel_split(3, 40, 14, 3, 12);
    return d;
}

}  // namespace

TEST(Pipeline, KindNames) {
    for (auto k : {BaselineKind::homo_poisson, BaselineKind::hawkes, BaselineKind::self_correcting,
                   BaselineKind::gmm_pairwise, BaselineKind::gmm_kcluster, BaselineKind::gaussian}) {
        EXPECT_EQ(pipeline::baseline_kind_from_string(pipeline::to_string(k)), k);
    }
    EXPECT_TRUE(pipeline::is_temporal(BaselineKind::hawkes));
    EXPECT_FALSE(pipeline::is_temporal(BaselineKind::gaussian));
    EXPECT_THROW((void)pipeline::baseline_kind_from_string("rnn"), std::invalid_argument);
    EXPECT_THROW((void)pipeline::fit_temporal(BaselineKind::gaussian, data().norm.train), std::invalid_argument);
    EXPECT_THROW((void)pipeline::fit_space(BaselineKind::hawkes, data().norm.train), std::invalid_argument);
    EXPECT_THROW((void)pipeline::time_sequences(data().raw.train), std::invalid_argument);
}

TEST(Pipeline, TimeSequencesAreIncreasing) {
    const auto seqs = pipeline::time_sequences(data().norm.train);
    ASSERT_EQ(seqs.size(), data().norm.train.size());
    for (const auto& s : seqs) {
        EXPECT_EQ(s.size(), 14u);
        for (std::size_t i = 1; i < s.size(); ++i) {
            EXPECT_GT(s[i], s[i - 1]);
        }
    }
}

TEST(Pipeline, PoissonFitIsCountOverLength) {
    const auto seqs = pipeline::time_sequences(data().norm.train);
    // Each sequence is observed on [front, back].
    double n = 0.0, len = 0.0;
    for (const auto& s : seqs) {
        n += static_cast<double>(s.size());
        len += s.back() - s.front();
    }
    const auto fit = pipeline::fit_temporal(BaselineKind::homo_poisson, data().norm.train);
    EXPECT_NEAR(fit.params.rate, n / len, 1e-6 * n / len);
}

TEST(Pipeline, GaussianFitIsSampleMoments) {
    std::vector<std::vector<double>> pts;
    for (const auto& s : data().norm.train) {
        for (const auto& e : s.events) {
            pts.push_back(e.x);
        }
    }
    const auto cov = oracle::covariance(pts);
    const auto model = std::get<classical::GmmKClusterParams>(pipeline::fit_space(BaselineKind::gaussian, data().norm.train));
    ASSERT_EQ(model.components.size(), 1u);
    const auto& c = model.components.front();
    for (std::size_t k = 0; k < 2; ++k) {
        double m = 0.0;
        for (const auto& p : pts) {
            m += p[k];
        }
        EXPECT_NEAR(c.mean[k], m / static_cast<double>(pts.size()), 1e-10);
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const double ridge = i % 3 == 0 ? 1e-6 : 0.0;
        EXPECT_NEAR(c.cov[i], cov[i] + ridge, 1e-9);
    }
}

TEST(Pipeline, EvaluateMatchesClosedForms) {
    const auto& test = data().norm.test;
    const auto fit = pipeline::fit_temporal(BaselineKind::homo_poisson, data().norm.train);
    const auto space = pipeline::fit_space(BaselineKind::gaussian, data().norm.train);
    const auto& g = std::get<classical::GmmKClusterParams>(space).components.front();

    classical::BaselineModels both{fit.params, space};
    const auto res = pipeline::evaluate_baseline(both, test);
    ASSERT_EQ(res.per_sequence_time.size(), test.size());
    const double r = fit.params.rate;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto times = events::scaled_times(test[i]);
        double nt = 0.0, ns = 0.0;
        for (std::size_t l = test[i].n_in; l < test[i].size(); ++l) {
            nt += -std::log(r) + r * (times[l] - times[l - 1]);
            ns -= oracle::mvn_logpdf(test[i].events[l].x, g.mean, g.cov);
        }
        EXPECT_NEAR(res.per_sequence_time[i], nt, 1e-10);
        EXPECT_NEAR(res.per_sequence_space[i], ns, 1e-10);
    }
    EXPECT_NEAR(res.joint.mean, res.time.mean + res.space.mean, 1e-10);

    // Absent halves contribute nothing; regularizer weights do not leak in.
    classical::BaselineOptions opts;
    opts.lambda1 = 100.0;
    const auto time_only = pipeline::evaluate_baseline({fit.params, std::nullopt}, test, opts);
    EXPECT_EQ(time_only.per_sequence_time, res.per_sequence_time);
    EXPECT_EQ(time_only.space.mean, 0.0);
}

TEST(Pipeline, HawkesAndPairwiseFitsRun) {
    const auto h = pipeline::fit_temporal(BaselineKind::hawkes, data().norm.train);
    EXPECT_TRUE(std::isfinite(h.nll));
    EXPECT_GE(h.params.alpha, 0.0);
    const auto sc = pipeline::fit_temporal(BaselineKind::self_correcting, data().norm.train);
    EXPECT_TRUE(std::isfinite(sc.nll));
    const auto pw = pipeline::fit_space(BaselineKind::gmm_pairwise, data().norm.train);
    const auto& p = std::get<classical::GmmPairwiseParams>(pw);
    EXPECT_EQ(p.scales.size(), 2u);
    EXPECT_GT(p.gamma, 0.0);
    const auto res = pipeline::evaluate_baseline({h.params, pw}, data().norm.test);
    EXPECT_TRUE(std::isfinite(res.joint.mean));
}
