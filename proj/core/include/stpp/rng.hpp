#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace stpp {

/// Serializable generator state: the seed/stream pair that produced it plus
/// the four xoshiro words.
struct RngState {
    std::uint64_t seed{0};
    std::uint64_t stream{0};
    std::array<std::uint64_t, 4> words{};
};

/// xoshiro256** seeded through splitmix64.
///
/// The bit stream depends only on (seed, stream), so draws are identical
/// across platforms and standard libraries. Distribution helpers are written
/// out here instead of using <random> distributions, whose algorithms are
/// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);
    explicit Rng(const RngState& state);

    std::uint64_t next_u64();

    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Standard normal via Box-Muller; caches the second variate.
    double normal();
    double exponential(double rate);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    [[nodiscard]] RngState state() const;
    [[nodiscard]] std::string serialize() const;
    static Rng deserialize(const std::string& text);

    /// Child generator on a distinct stream; does not advance this one.
    [[nodiscard]] Rng split(std::uint64_t stream) const;

private:
    std::uint64_t seed_{0};
    std::uint64_t stream_{0};
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_{false};
    double spare_{0.0};
};

}  // namespace stpp
