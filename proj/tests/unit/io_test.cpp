#include <stpp/io.hpp>

#include <fixtures.hpp>

#include <gtest/gtest.h>

#include <fstream>
#include <stdexcept>

using namespace stpp;

namespace {

void expect_same(const events::EventSequence& a, const events::EventSequence& b) {
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.n_in, b.n_in);
    EXPECT_EQ(a.l_out, b.l_out);
    EXPECT_EQ(a.t0, b.t0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.events[i].t, b.events[i].t);
        EXPECT_EQ(a.events[i].x, b.events[i].x);
        EXPECT_EQ(a.events[i].m, b.events[i].m);
    }
}

}  // namespace

TEST(Dataset, SaveLoadRoundTrip) {
    const auto data = fixtures::pinwheel_split(2, 30, 10, 2, 8);
    const auto dir = fixtures::scratch_dir("dataset");
    io::Manifest m;
    m.n_in = 8;
    m.l_out = 2;
    m.seq_len = 10;
    m.overlap = 8;
    m.seed = 3;
    m.stats = data.norm.stats;
    m.source = "pinwheel";
    io::save_dataset(dir, data.raw, m);
    for (const char* f : {"manifest.json", "train.json", "val.json", "test.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const auto back = io::load_dataset(dir);
    EXPECT_EQ(io::to_json(back.manifest), io::to_json(m));
    ASSERT_EQ(back.raw.train.size(), data.raw.train.size());
    ASSERT_EQ(back.raw.test.size(), data.raw.test.size());
    for (std::size_t i = 0; i < data.raw.train.size(); ++i) {
        expect_same(back.raw.train[i], data.raw.train[i]);
    }
    ASSERT_EQ(back.normalized.val.size(), data.norm.val.size());
    for (std::size_t i = 0; i < data.norm.val.size(); ++i) {
        EXPECT_TRUE(back.normalized.val[i].normalized);
        for (std::size_t k = 0; k < data.norm.val[i].dt.size(); ++k) {
            EXPECT_NEAR(back.normalized.val[i].dt[k], data.norm.val[i].dt[k], 1e-14);
        }
    }
}

TEST(Dataset, MissingOrBrokenFiles) {
    EXPECT_THROW((void)io::load_dataset("/nonexistent/stpp-dir"), std::runtime_error);
    const auto dir = fixtures::scratch_dir("broken");
    std::ofstream(dir / "manifest.json") << "{not json";
    EXPECT_THROW((void)io::load_dataset(dir), std::runtime_error);
    EXPECT_THROW((void)io::read_json(dir / "absent.json"), std::runtime_error);
}

TEST(Json, TemporalParamsRoundTrip) {
    for (const auto& p : {classical::TemporalModelParams::poisson(0.7), classical::TemporalModelParams::hawkes(0.2, 0.4, 1.5),
                          classical::TemporalModelParams::self_correcting(0.1, 0.3, 0.9)}) {
        const auto back = io::temporal_params_from_json(io::to_json(p));
        EXPECT_EQ(back.kind, p.kind);
        EXPECT_EQ(back.rate, p.rate);
        EXPECT_EQ(back.mu, p.mu);
        EXPECT_EQ(back.alpha, p.alpha);
        EXPECT_EQ(back.beta, p.beta);
    }
    classical::FitResult fit{classical::TemporalModelParams::hawkes(0.2, 0.4, 1.5), 1.25, 17, true};
    const auto j = io::to_json(fit);
    EXPECT_EQ(j["fit_meta"]["iters"], 17);
    EXPECT_EQ(j["fit_meta"]["converged"], true);
    EXPECT_EQ(io::temporal_params_from_json(j).alpha, 0.4);
    EXPECT_THROW((void)io::temporal_params_from_json({{"kind", "weibull"}}), std::exception);
}

TEST(Json, SpaceModelsRoundTrip) {
    classical::GmmPairwiseParams pw{{0.3, 0.6}, 2.0};
    const auto a = io::space_model_from_json(io::to_json(classical::SpaceModel{pw}));
    ASSERT_TRUE(std::holds_alternative<classical::GmmPairwiseParams>(a));
    EXPECT_EQ(std::get<classical::GmmPairwiseParams>(a).scales, pw.scales);
    EXPECT_EQ(std::get<classical::GmmPairwiseParams>(a).gamma, 2.0);

    classical::GmmKClusterParams kc;
    kc.d = 2;
    kc.components.push_back({{0.1, -0.2}, {1.0, 0.2, 0.2, 0.5}, 0.4});
    kc.components.push_back({{1.0, 2.0}, {0.3, 0.0, 0.0, 0.3}, 0.6});
    const auto b = io::space_model_from_json(io::to_json(classical::SpaceModel{kc}));
    ASSERT_TRUE(std::holds_alternative<classical::GmmKClusterParams>(b));
    const auto& kb = std::get<classical::GmmKClusterParams>(b);
    ASSERT_EQ(kb.components.size(), 2u);
    EXPECT_EQ(kb.components[0].cov, kc.components[0].cov);
    EXPECT_EQ(kb.components[1].mean, kc.components[1].mean);
    const std::vector<double> x{0.5, 0.5};
    EXPECT_EQ(classical::gmm_kcluster_logprob(kb, x), classical::gmm_kcluster_logprob(kc, x));
}

TEST(Json, WriteReadFile) {
    const auto dir = fixtures::scratch_dir("json");
    const nlohmann::json j = {{"a", 1.0 / 3.0}, {"b", {1, 2, 3}}};
    io::write_json(dir / "x.json", j);
    EXPECT_EQ(io::read_json(dir / "x.json"), j);
}
