#include <stpp/params.hpp>
#include <stpp/rng.hpp>

#include <fixtures.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

using namespace stpp;
using namespace stpp::ad;

namespace {

ParamStore sample_store() {
    Rng rng(2);
    ParamStore ps;
    Array w({3, 4});
    for (auto& v : w.values()) {
        v = rng.normal();
    }
    w[0] = std::numeric_limits<double>::denorm_min();
    w[1] = -0.0;
    w[2] = 1e308;
    ps.add("enc.layer0.attn.Wq", w);
    ps.add("head.time.b", Array({1}, 0.25));
    ps.add("frozen", Array(Shape{}, 3.0), false);
    return ps;
}

}  // namespace

TEST(ParamStore, NamesAreUnique) {
    ParamStore ps;
    ps.add("a", Array({2}));
    EXPECT_THROW(ps.add("a", Array({2})), std::invalid_argument);
    EXPECT_THROW(ps.add("", Array({2})), std::invalid_argument);
    EXPECT_THROW((void)ps.get("missing"), std::out_of_range);
    EXPECT_EQ(ps.count(), 2u);
}

TEST(ParamStore, CompleteFillsUnreachedWithZeros) {
    auto ps = sample_store();
    Tape t;
    const auto g = t.backward(sum(ps.bind(t, "head.time.b")));
    const auto full = ps.complete(g);
    EXPECT_EQ(full.count("frozen"), 0u);
    ASSERT_EQ(full.count("enc.layer0.attn.Wq"), 1u);
    for (double v : full.at("enc.layer0.attn.Wq").values()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_EQ(full.at("head.time.b")[0], 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto ps = sample_store();
    const auto dir = fixtures::scratch_dir("ckpt");
    const nlohmann::json meta = {{"epoch", 7}, {"note", "x"}};
    save_checkpoint(dir / "a.stpp1", ps, meta);
    const auto back = load_checkpoint(dir / "a.stpp1");
    EXPECT_TRUE(back.params == ps);
    EXPECT_EQ(back.meta, meta);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& a = ps.items()[i].value.values();
        const auto& b = back.params.items()[i].value.values();
        EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
        EXPECT_EQ(ps.items()[i].trainable, back.params.items()[i].trainable);
    }
    // Saving the loaded copy reproduces the same bytes.
    save_checkpoint(dir / "b.stpp1", back.params, back.meta);
    std::ifstream fa(dir / "a.stpp1", std::ios::binary), fb(dir / "b.stpp1", std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str().substr(0, 5), "STPP1");
}

TEST(Checkpoint, RejectsCorruptInput) {
    std::stringstream bad("NOTIT0000000000");
    EXPECT_THROW((void)read_checkpoint(bad), std::runtime_error);

    std::stringstream full;
    write_checkpoint(full, sample_store(), nlohmann::json::object());
    const std::string bytes = full.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 8));
    EXPECT_THROW((void)read_checkpoint(cut), std::runtime_error);
    EXPECT_THROW((void)load_checkpoint("/nonexistent/x.stpp1"), std::runtime_error);
}
