#pragma once

#include <stpp/events.hpp>
#include <stpp/neural.hpp>
#include <stpp/rng.hpp>
#include <stpp/simulate.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace stpp::fixtures {

struct PinwheelSplit {
    events::SequenceDataset raw;
    events::SequenceDataset norm;
};

/// Small Hawkes-timed pinwheel windowed and split; raw and normalized copies.
[[nodiscard]] inline PinwheelSplit pinwheel_split(std::size_t clusters, std::size_t per_cluster, std::size_t seq_len,
                                                  std::size_t l_out, std::size_t overlap, std::uint64_t seed = 3) {
    simulate::PinwheelConfig pc;
    pc.n_clusters = clusters;
    pc.per_cluster = per_cluster;
    Rng rng(seed);
    const auto evs =
        simulate::make_pinwheel_dataset(pc, classical::TemporalModelParams::hawkes(0.5, 0.5, 1.0), rng);
    auto windows = events::window_sequences(evs, seq_len, overlap, l_out);
    PinwheelSplit out;
    out.raw = events::split_dataset(std::move(windows), {}, seed);
    out.norm = events::normalize(out.raw);
    return out;
}

/// Compact network configuration for fast tests.
[[nodiscard]] inline neural::NetConfig tiny_net(std::size_t n_in, std::size_t l_out, std::size_t d = 2) {
    neural::NetConfig c;
    c.d_space = d;
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ff_mult = 2;
    c.dropout = 0.0;
    c.n_in = n_in;
    c.l_out = l_out;
    c.flow_layers = 2;
    c.flow_hidden = 6;
    c.head_hidden = 6;
    return c;
}

/// Fresh scratch directory under the system temp dir.
[[nodiscard]] inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("stpp-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace stpp::fixtures
