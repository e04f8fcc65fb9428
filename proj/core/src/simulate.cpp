#include "stpp/simulate.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stpp::simulate {

using classical::IntensityTracker;
using classical::TemporalKind;

namespace {

template <typename Stop>
std::vector<double> thin(const TemporalModelParams& model, Rng& rng, std::span<const double> history,
                         const ThinningConfig& cfg, Stop&& stop) {
    if (!(cfg.bound_scale >= 1.0) || !std::isfinite(cfg.bound_scale)) {
        throw std::invalid_argument("bound_scale must be a finite value >= 1");
    }
    if (!(cfg.lookahead > 0.0)) {
        throw std::invalid_argument("lookahead must be positive");
    }
    IntensityTracker tracker(model);
    for (double h : history) {
        tracker.add_event(h);
    }
    const bool growing = model.kind == TemporalKind::self_correcting && model.alpha > 0.0;
    double t = history.empty() ? 0.0 : history.back();
    bool at_event = !history.empty();

    std::vector<double> out;
    while (!stop(out, t)) {
        double bound = at_event ? tracker.right_limit() : tracker.at(t);
        double window_end = std::numeric_limits<double>::infinity();
        if (growing) {
            window_end = t + cfg.lookahead;
            bound = std::exp(model.mu + model.alpha * window_end - model.beta * static_cast<double>(tracker.count()));
        }
        bound *= cfg.bound_scale;
        if (!std::isfinite(bound) || !(bound > 0.0)) {
            throw std::runtime_error("non-finite or zero intensity bound at t = " + std::to_string(t));
        }
        double cand = t + rng.exponential(bound);
        if (cand <= t) {
            cand = std::nextafter(t, std::numeric_limits<double>::infinity());
        }
        if (cand > window_end) {
            t = window_end;
            at_event = false;
            continue;
        }
        if (stop.beyond(cand)) {
            break;
        }
        const double lam = tracker.at(cand);
        if (!std::isfinite(lam)) {
            throw std::runtime_error("non-finite intensity at t = " + std::to_string(cand));
        }
        if (lam > bound * (1.0 + 1e-9)) {
            throw std::runtime_error("thinning bound violated at t = " + std::to_string(cand));
        }
        t = cand;
        at_event = false;
        if (rng.uniform() * bound <= lam) {
            tracker.add_event(t);
            out.push_back(t);
            at_event = true;
            if (out.size() > cfg.max_events) {
                throw std::runtime_error("event cap of " + std::to_string(cfg.max_events) +
                                         " exceeded before the horizon");
            }
        }
    }
    return out;
}

struct HorizonStop {
    double horizon;
    bool operator()(const std::vector<double>&, double t) const { return t >= horizon; }
    [[nodiscard]] bool beyond(double cand) const { return cand > horizon; }
};

struct CountStop {
    std::size_t count;
    bool operator()(const std::vector<double>& out, double) const { return out.size() >= count; }
    [[nodiscard]] bool beyond(double) const { return false; }
};

}  // namespace

std::vector<double> thinning_until(const TemporalModelParams& model, double horizon, Rng& rng,
                                   std::span<const double> history, const ThinningConfig& cfg) {
    const double start = history.empty() ? 0.0 : history.back();
    if (!(horizon > start) || !std::isfinite(horizon)) {
        throw std::invalid_argument("horizon must be finite and after the history");
    }
    return thin(model, rng, history, cfg, HorizonStop{horizon});
}

std::vector<double> thinning_count(const TemporalModelParams& model, std::size_t count, Rng& rng,
                                   std::span<const double> history, const ThinningConfig& cfg) {
    if (count == 0) {
        throw std::invalid_argument("event count must be positive");
    }
    return thin(model, rng, history, cfg, CountStop{count});
}

double sample_next_time(const TemporalModelParams& model, std::span<const double> history, Rng& rng,
                        const ThinningConfig& cfg) {
    return thinning_count(model, 1, rng, history, cfg).front();
}

void PinwheelConfig::validate() const {
    if (n_clusters == 0 || per_cluster == 0) {
        throw std::invalid_argument("pinwheel needs at least one cluster and one event per cluster");
    }
    if (!(radial_std >= 0.0) || !(tangential_std >= 0.0) || !(rate >= 0.0)) {
        throw std::invalid_argument("pinwheel noise scales and rate must be nonnegative");
    }
}

std::vector<LabeledPoint> pinwheel_spatial(const PinwheelConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<LabeledPoint> out;
    out.reserve(cfg.n_clusters * cfg.per_cluster);
    const double step = 2.0 * std::numbers::pi / static_cast<double>(cfg.n_clusters);
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        const double base = -step * static_cast<double>(c);
        for (std::size_t i = 0; i < cfg.per_cluster; ++i) {
            const double r = 1.0 + cfg.radial_std * rng.normal();
            const double s = cfg.tangential_std * rng.normal();
            const double angle = base + cfg.rate * std::exp(r);
            const double ca = std::cos(angle);
            const double sa = std::sin(angle);
            out.push_back(LabeledPoint{{r * ca - s * sa, r * sa + s * ca}, c});
        }
    }
    return out;
}

std::vector<events::Event> pair_events(std::span<const double> times, std::span<const LabeledPoint> points) {
    if (times.size() != points.size()) {
        throw std::invalid_argument("length mismatch: " + std::to_string(times.size()) + " times vs " +
                                    std::to_string(points.size()) + " locations");
    }
    std::vector<events::Event> out;
    out.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        out.push_back(events::Event{times[i], {points[i].x[0], points[i].x[1]}, 1.0});
    }
    return out;
}

std::vector<events::Event> make_pinwheel_dataset(const PinwheelConfig& cfg, const TemporalModelParams& temporal,
                                                 Rng& rng, const ThinningConfig& thinning) {
    Rng space_rng = rng.split(1);
    Rng time_rng = rng.split(2);
    const auto points = pinwheel_spatial(cfg, space_rng);
    const auto times = thinning_count(temporal, points.size(), time_rng, {}, thinning);
    rng.next_u64();
    return pair_events(times, points);
}

std::vector<events::Event> temporal_events(std::span<const double> times, std::size_t d) {
    std::vector<events::Event> out;
    out.reserve(times.size());
    for (double t : times) {
        out.push_back(events::Event{t, std::vector<double>(d, 0.0), 1.0});
    }
    return out;
}

}  // namespace stpp::simulate
