#include "stpp/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace stpp {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::uint64_t sm = seed ^ (stream * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL);
    for (auto& w : s_) {
        w = splitmix64(sm);
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) {
        s_[0] = 1;
    }
}

Rng::Rng(const RngState& state) : seed_(state.seed), stream_(state.stream), s_(state.words) {}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 random bits centred in their cell: never exactly 0 or 1.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

double Rng::exponential(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw std::invalid_argument("exponential rate must be positive and finite");
    }
    return -std::log(uniform()) / rate;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below requires n > 0");
    }
    // Rejection to avoid modulo bias.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % n;
}

RngState Rng::state() const {
    return RngState{seed_, stream_, s_};
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << "xoshiro256ss " << seed_ << ' ' << stream_;
    for (auto w : s_) {
        os << ' ' << w;
    }
    return os.str();
}

Rng Rng::deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    RngState st;
    is >> tag >> st.seed >> st.stream >> st.words[0] >> st.words[1] >> st.words[2] >> st.words[3];
    if (!is || tag != "xoshiro256ss") {
        throw std::invalid_argument("malformed rng state: " + text);
    }
    return Rng(st);
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(seed_ ^ rotl(s_[0], 13), stream_ * 0x9E3779B97F4A7C15ULL + stream + 1);
}

}  // namespace stpp
