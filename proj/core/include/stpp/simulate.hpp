#pragma once

#include "stpp/events.hpp"
#include "stpp/rng.hpp"
#include "stpp/temporal.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace stpp::simulate {

using classical::TemporalModelParams;

struct ThinningConfig {
    /// Bound inflation factor (>= 1). Any value gives the same distribution.
    double bound_scale{1.0};
    /// Lookahead window for intensities that grow between events.
    double lookahead{1.0};
    /// Cap on generated events when sampling up to a horizon.
    std::size_t max_events{50'000'000};
};

/// Ogata thinning on (start, horizon], where start is the last history time
/// (or 0 without history). Returns only the new times.
/// Throws std::runtime_error when max_events is exceeded.
[[nodiscard]] std::vector<double> thinning_until(const TemporalModelParams& model, double horizon, Rng& rng,
                                                 std::span<const double> history = {},
                                                 const ThinningConfig& cfg = {});

/// Ogata thinning for exactly `count` new events after the history.
[[nodiscard]] std::vector<double> thinning_count(const TemporalModelParams& model, std::size_t count, Rng& rng,
                                                 std::span<const double> history = {},
                                                 const ThinningConfig& cfg = {});

/// One draw of the next event time after the history.
[[nodiscard]] double sample_next_time(const TemporalModelParams& model, std::span<const double> history, Rng& rng,
                                      const ThinningConfig& cfg = {});

struct PinwheelConfig {
    std::size_t n_clusters{15};
    std::size_t per_cluster{150};
    double radial_std{0.3};
    double tangential_std{0.1};
    /// Spiral tightness: extra rotation rate * exp(radius).
    double rate{0.25};

    void validate() const;
};

struct LabeledPoint {
    std::array<double, 2> x{};
    std::size_t label{0};
};

/// Spiral Gaussian arms. Clusters are emitted one after another in clockwise
/// (decreasing angle) order; cluster c sits at base angle -2 pi c / K.
[[nodiscard]] std::vector<LabeledPoint> pinwheel_spatial(const PinwheelConfig& cfg, Rng& rng);

/// Pairs times with locations index by index; m = 1 for every event.
[[nodiscard]] std::vector<events::Event> pair_events(std::span<const double> times,
                                                     std::span<const LabeledPoint> points);

/// Hawkes (or any temporal model) times from thinning paired with the
/// clockwise pinwheel locations.
[[nodiscard]] std::vector<events::Event> make_pinwheel_dataset(const PinwheelConfig& cfg,
                                                               const TemporalModelParams& temporal, Rng& rng,
                                                               const ThinningConfig& thinning = {});

/// Events of a purely temporal simulation: x = 0 in every dimension, m = 1.
[[nodiscard]] std::vector<events::Event> temporal_events(std::span<const double> times, std::size_t d);

}  // namespace stpp::simulate
