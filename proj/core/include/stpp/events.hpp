#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace stpp::events {

/// One marked point: time, d-dimensional location, scalar extra marker.
struct Event {
    double t{0.0};
    std::vector<double> x;
    double m{0.0};
};

/// Affine min-max map of one time block onto [0, 1].
struct TimeScale {
    double min{0.0};
    double max{0.0};

    [[nodiscard]] double apply(double t) const;
    [[nodiscard]] double invert(double u) const;
};

/// A window of n_in history events followed by l_out target events.
///
/// Raw sequences carry times shifted so the window starts at 0; `t0` keeps the
/// original absolute start. After normalization, `events` hold min-max scaled
/// times (inputs and outputs scaled separately), standardized locations and
/// markers, and `dt` holds the interval of each event to its predecessor
/// divided by the training dt_max (dt[0] == 0).
struct EventSequence {
    std::vector<Event> events;
    std::size_t n_in{0};
    std::size_t l_out{0};
    double t0{0.0};

    bool normalized{false};
    std::vector<double> dt;
    TimeScale in_scale{};
    TimeScale out_scale{};

    [[nodiscard]] std::size_t size() const { return events.size(); }
};

struct NormStats {
    std::vector<double> space_mean;
    std::vector<double> space_var;
    double marker_mean{0.0};
    double marker_var{1.0};
    double dt_max{1.0};
};

struct SequenceDataset {
    std::vector<EventSequence> train;
    std::vector<EventSequence> val;
    std::vector<EventSequence> test;
    NormStats stats;
    std::size_t d{0};
};

struct SplitFractions {
    double train{0.80};
    double val{0.14};
    double test{0.06};
};

/// Parses `t,x1,...,xd,m` CSV. Rejects malformed headers, wrong column
/// counts, non-finite values and decreasing times.
[[nodiscard]] std::vector<Event> parse_event_csv(std::istream& in, std::size_t d);
[[nodiscard]] std::vector<Event> parse_event_csv(std::string_view text, std::size_t d);

void write_event_csv(std::ostream& out, const std::vector<Event>& events, std::size_t d);

/// Fixed-length windows with stride seq_len - overlap; trailing partial window
/// dropped; each window's times shifted to start at 0.
[[nodiscard]] std::vector<EventSequence> window_sequences(const std::vector<Event>& events,
                                                          std::size_t seq_len,
                                                          std::size_t overlap,
                                                          std::size_t l_out);

/// Seeded shuffle, then floor allocation with at least one sequence in each of
/// val and test and the remainder in train. Stats are computed from train.
[[nodiscard]] SequenceDataset split_dataset(std::vector<EventSequence> sequences,
                                            const SplitFractions& fractions,
                                            std::uint64_t seed);

/// Statistics of the (raw) training split.
[[nodiscard]] NormStats compute_stats(const std::vector<EventSequence>& train, std::size_t d);

[[nodiscard]] EventSequence normalize_sequence(const EventSequence& raw, const NormStats& stats);
/// Normalizes every split with `dataset.stats` (recomputed from train when empty).
[[nodiscard]] SequenceDataset normalize(const SequenceDataset& raw);

[[nodiscard]] std::vector<double> normalize_location(const std::vector<double>& x, const NormStats& stats);
[[nodiscard]] std::vector<double> denormalize_location(const std::vector<double>& x_norm, const NormStats& stats);
[[nodiscard]] double normalize_marker(double m, const NormStats& stats);
[[nodiscard]] double denormalize_marker(double m_norm, const NormStats& stats);
[[nodiscard]] double normalize_interval(double dt, const NormStats& stats);
[[nodiscard]] double denormalize_interval(double dt_norm, const NormStats& stats);

/// Exact inverse of normalize_sequence: absolute times (t0 included),
/// locations and markers.
[[nodiscard]] EventSequence denormalize_sequence(const EventSequence& norm, const NormStats& stats);

/// Times of the sequence in dt_max units measured from the window start:
/// the cumulative sum of the normalized intervals.
[[nodiscard]] std::vector<double> scaled_times(const EventSequence& norm);

}  // namespace stpp::events
