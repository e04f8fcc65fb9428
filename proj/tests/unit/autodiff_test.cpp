#include <stpp/autodiff.hpp>
#include <stpp/grad_check.hpp>
#include <stpp/params.hpp>
#include <stpp/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

using namespace stpp;
using namespace stpp::ad;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (auto& v : a.values()) {
        v = lo + (hi - lo) * rng.uniform();
    }
    return a;
}

/// Checks gradients of sum(w * f(x, y)) with fixed random weights w.
void check_binary(const std::function<Var(Var, Var)>& f, Shape sa, Shape sb, double lo = -1.0, double hi = 1.0) {
    Rng rng(17);
    ParamStore ps;
    ps.add("a", random_array(sa, rng, lo, hi));
    ps.add("b", random_array(sb, rng, lo, hi));
    Array probe;
    auto loss = [&](Tape& t, const ParamStore& p) {
        Var out = f(p.bind(t, "a"), p.bind(t, "b"));
        if (probe.size() != out.value().size()) {
            Rng wr(5);
            probe = random_array(out.shape(), wr);
        }
        return sum(mul(out, t.constant(probe)));
    };
    const auto report = grad_check(loss, ps, 1e-5, 1e-4);
    for (const auto& e : report.entries) {
        EXPECT_LT(e.rel_error, 1e-4) << e.name;
    }
    EXPECT_TRUE(report.passed);
}

void check_unary(const std::function<Var(Var)>& f, Shape s, double lo = -1.0, double hi = 1.0) {
    check_binary([&](Var a, Var) { return f(a); }, std::move(s), Shape{1}, lo, hi);
}

}  // namespace

TEST(Array, ShapesAndAccess) {
    Array a({2, 3}, 1.5);
    EXPECT_EQ(a.size(), 6u);
    EXPECT_EQ(a.dim(-1), 3u);
    a.at({1, 2}) = 4.0;
    EXPECT_EQ(a[5], 4.0);
    EXPECT_EQ(Array::scalar(2.0).item(), 2.0);
    EXPECT_THROW((void)a.item(), std::exception);
    EXPECT_THROW((void)Array(Shape{2}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Primitives, ExamplesFromDefinitions) {
    Tape t;
    Var x = t.variable(Array({1, 1}, 3.0));
    EXPECT_EQ(softmax(x).value().item(), 1.0);

    Var c = t.variable(Array({4}, std::vector<double>{2.0, 2.0, 2.0, 2.0}));
    for (double v : normalize_last(c).value().values()) {
        EXPECT_EQ(v, 0.0);
    }

    // d/dx x e^x at 1 = 2e.
    Tape t2;
    Var y = t2.variable(Array::scalar(1.0), "x");
    const auto g = t2.backward(mul(y, exp(y)));
    const double fd = ((1.0 + 1e-6) * std::exp(1.0 + 1e-6) - (1.0 - 1e-6) * std::exp(1.0 - 1e-6)) / 2e-6;
    EXPECT_NEAR(g.at("x").item(), 2.0 * std::exp(1.0), 1e-12);
    EXPECT_NEAR(g.at("x").item() / fd, 1.0, 1e-9);
}

TEST(Primitives, SumGradientIsOnes) {
    Tape t;
    Var w = t.variable(Array({3, 2}, 0.7), "W");
    const auto g = t.backward(sum(w));
    for (double v : g.at("W").values()) {
        EXPECT_EQ(v, 1.0);
    }
}

TEST(Primitives, BackwardIsIdempotent) {
    Tape t;
    Rng rng(1);
    Var w = t.variable(random_array({3, 4}, rng), "W");
    Var x = t.constant(random_array({2, 3}, rng));
    Var loss = sum(tanh(matmul(x, w)));
    const auto g1 = t.backward(loss);
    const auto g2 = t.backward(loss);
    EXPECT_EQ(g1.at("W").values(), g2.at("W").values());
}

TEST(Primitives, DomainErrors) {
    Tape t;
    Var z = t.constant(Array({2}, 0.0));
    EXPECT_THROW((void)log(z), std::domain_error);
    EXPECT_THROW((void)div(t.constant(Array({2}, 1.0)), z), std::domain_error);
    EXPECT_THROW((void)sqrt(t.constant(Array({1}, -1.0))), std::domain_error);
    Array mask({1, 2}, 1.0);
    EXPECT_ANY_THROW((void)softmax(masked_fill(t.constant(Array({1, 2}, 0.0)), mask)));
    EXPECT_THROW((void)add(t.constant(Array({2})), t.constant(Array({3}))), std::invalid_argument);
}

TEST(GradCheck, ElementwiseBinary) {
    check_binary([](Var a, Var b) { return add(a, b); }, {2, 3}, {3});
    check_binary([](Var a, Var b) { return sub(a, b); }, {2, 3}, {2, 1});
    check_binary([](Var a, Var b) { return mul(a, b); }, {4}, {1});
    check_binary([](Var a, Var b) { return div(a, b); }, {2, 2}, {2, 2}, 0.5, 2.0);
    check_binary([](Var a, Var) { return add(mul(a, 3.0), 2.0); }, {3}, {1});
    check_binary([](Var a, Var) { return rsub(1.5, a); }, {3}, {1});
}

TEST(GradCheck, ElementwiseUnary) {
    check_unary([](Var a) { return negate(a); }, {5});
    check_unary([](Var a) { return exp(a); }, {5});
    check_unary([](Var a) { return log(a); }, {5}, 0.2, 3.0);
    check_unary([](Var a) { return tanh(a); }, {5});
    check_unary([](Var a) { return sigmoid(a); }, {5});
    check_unary([](Var a) { return elu(a); }, {2, 5}, -2.0, 2.0);
    check_unary([](Var a) { return softplus(a); }, {5}, -3.0, 3.0);
    check_unary([](Var a) { return square(a); }, {5});
    check_unary([](Var a) { return sqrt(a); }, {5}, 0.2, 3.0);
}

TEST(GradCheck, ReductionsAndShapes) {
    check_unary([](Var a) { return sum(a); }, {2, 3});
    check_unary([](Var a) { return mean(a); }, {2, 3});
    check_unary([](Var a) { return sum(a, 1, true); }, {2, 3, 2});
    check_unary([](Var a) { return mean(a, -1); }, {2, 3});
    check_unary([](Var a) { return reshape(a, {3, 2}); }, {2, 3});
    check_unary([](Var a) { return broadcast_to(a, {4, 2, 3}); }, {2, 3});
    check_unary([](Var a) { return transpose(a); }, {2, 3, 4});
    check_unary([](Var a) { return transpose(a, 0, 2); }, {2, 3, 4});
    check_unary([](Var a) { return slice(a, 1, 1, 2); }, {2, 4});
    check_binary([](Var a, Var b) { return concat({a, b}, -1); }, {2, 3}, {2, 1});
    check_binary([](Var a, Var b) { return concat({a, b}, 0); }, {1, 3}, {2, 3});
}

TEST(GradCheck, LinearAlgebra) {
    check_binary([](Var a, Var b) { return matmul(a, b); }, {3, 4}, {4, 2});
    check_binary([](Var a, Var b) { return matmul(a, b); }, {2, 3, 4}, {4, 5});
    check_binary([](Var a, Var b) { return matmul(a, b); }, {2, 3, 4}, {2, 4, 2});
    check_binary(
        [](Var x, Var w) {
            Tape& t = *x.tape();
            return linear(x, w, t.constant(Array({2}, 0.3)));
        },
        {2, 3, 4}, {4, 2});
}

TEST(GradCheck, NormalizationAndSoftmax) {
    check_unary([](Var a) { return softmax(a); }, {3, 5});
    check_unary([](Var a) { return softmax(a, 0); }, {3, 5});
    Array mask({1, 4}, std::vector<double>{0.0, 1.0, 0.0, 0.0});
    check_unary([&](Var a) { return softmax(masked_fill(a, mask)); }, {3, 4});
    check_unary([](Var a) { return normalize_last(a); }, {3, 6});
    check_binary(
        [](Var x, Var g) {
            Tape& t = *x.tape();
            return layer_norm(x, g, t.constant(Array({5}, 0.1)));
        },
        {2, 5}, {5}, 0.5, 1.5);
}

TEST(GradCheck, CompositeMlp) {
    Rng rng(3);
    ParamStore ps;
    ps.add("W1", random_array({3, 8}, rng));
    ps.add("b1", random_array({8}, rng));
    ps.add("W2", random_array({8, 1}, rng));
    ps.add("b2", random_array({1}, rng));
    const Array x = random_array({5, 3}, rng);
    auto loss = [&](Tape& t, const ParamStore& p) {
        Var h = elu(linear(t.constant(x), p.bind(t, "W1"), p.bind(t, "b1")));
        return mean(square(linear(h, p.bind(t, "W2"), p.bind(t, "b2"))));
    };
    EXPECT_TRUE(grad_check(loss, ps, 1e-5, 1e-4).passed);
}

TEST(Dropout, TrainVersusEval) {
    Tape t;
    Rng rng(1);
    Var x = t.constant(Array({1000}, 1.0));
    Var same = dropout(x, 0.5, false, rng);
    EXPECT_EQ(same.value().values(), x.value().values());
    Var d = dropout(x, 0.5, true, rng);
    std::size_t zeros = 0;
    for (double v : d.value().values()) {
        zeros += v == 0.0 ? 1 : 0;
        EXPECT_TRUE(v == 0.0 || v == 2.0);
    }
    EXPECT_NEAR(static_cast<double>(zeros), 500.0, 60.0);
}
