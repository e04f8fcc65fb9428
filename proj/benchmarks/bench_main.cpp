#include <stpp/heads.hpp>
#include <stpp/neural.hpp>
#include <stpp/simulate.hpp>
#include <stpp/temporal.hpp>
#include <stpp/train.hpp>

#include <benchmark/benchmark.h>

#include <vector>

using namespace stpp;
using classical::TemporalModelParams;

namespace {

std::vector<events::EventSequence> desk_windows(std::size_t n_in) {
    simulate::PinwheelConfig pc;
    pc.n_clusters = 3;
    pc.per_cluster = 50;
    Rng rng(7);
    const auto evs = simulate::make_pinwheel_dataset(pc, TemporalModelParams::hawkes(0.5, 0.5, 1.0), rng);
    auto ds = events::normalize(events::split_dataset(events::window_sequences(evs, n_in + 3, n_in + 1, 3), {}, 0));
    return ds.train;
}

neural::NetConfig desk_net(std::size_t n_in) {
    neural::NetConfig c;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 2;
    c.n_in = n_in;
    c.l_out = 3;
    c.time_flow = neural::TimeFlow::softplus;
    return c;
}

}  // namespace

static void BM_ThinningHawkes(benchmark::State& state) {
    const auto m = TemporalModelParams::hawkes(0.5, 0.5, 1.0);
    Rng rng(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate::thinning_count(m, static_cast<std::size_t>(state.range(0)), rng));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ThinningHawkes)->Arg(1000)->Arg(100000);

static void BM_HawkesNll(benchmark::State& state) {
    Rng rng(2);
    const auto t = simulate::thinning_count(TemporalModelParams::hawkes(0.5, 0.5, 1.0),
                                            static_cast<std::size_t>(state.range(0)), rng);
    const auto m = TemporalModelParams::hawkes(0.4, 0.6, 1.2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(classical::nll_temporal(m, t));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HawkesNll)->Arg(20000);

static void BM_ExpectedNextTime(benchmark::State& state) {
    Rng rng(3);
    const auto hist = simulate::thinning_count(TemporalModelParams::hawkes(0.5, 0.5, 1.0), 57, rng);
    const auto m = TemporalModelParams::hawkes(0.5, 0.5, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(classical::expected_next_time(m, hist));
    }
}
BENCHMARK(BM_ExpectedNextTime);

static void BM_EncoderForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    auto cfg = desk_net(n);
    ad::ParamStore p;
    Rng rng(4);
    neural::init_network_params(p, cfg, rng);
    ad::Array in({8, n, cfg.features()});
    for (auto& v : in.values()) {
        v = rng.normal();
    }
    for (auto _ : state) {
        ad::Tape t;
        benchmark::DoNotOptimize(neural::encoder_forward(t, p, cfg, in, {}).h_t.value().data());
    }
}
BENCHMARK(BM_EncoderForward)->Arg(57)->Arg(497)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
    const auto seqs = desk_windows(57);
    auto model = train::init_model(desk_net(57), 0);
    const auto batch = train::make_batch(std::span(seqs).first(8), model.cfg, train::Ablation::none, true);
    train::Adam opt;
    Rng drop(1);
    for (auto _ : state) {
        ad::Tape t;
        const auto loss = train::loss_multi_event(t, model, batch, {true, &drop});
        opt.step(model.params, model.params.complete(t.backward(loss)), 1e-4);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_DensityGrid(benchmark::State& state) {
    const auto seqs = desk_windows(57);
    const auto model = train::init_model(desk_net(57), 0);
    events::NormStats stats;
    stats.space_mean = {0.0, 0.0};
    stats.space_var = {1.0, 1.0};
    train::GridConfig g;
    g.steps = static_cast<std::size_t>(state.range(0));
    g.samples = 500;
    for (auto _ : state) {
        benchmark::DoNotOptimize(train::export_density(model, seqs.front(), stats, g));
    }
}
BENCHMARK(BM_DensityGrid)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
