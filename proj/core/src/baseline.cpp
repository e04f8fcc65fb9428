#include "stpp/baseline.hpp"

#include <cmath>
#include <stdexcept>

namespace stpp::classical {

namespace {

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        acc += (a[k] - b[k]) * (a[k] - b[k]);
    }
    return std::sqrt(acc);
}

}  // namespace

double BaselineLossTerms::output_time_sum() const {
    double acc = 0.0;
    for (double v : output_time) {
        acc += v;
    }
    return acc;
}

double BaselineLossTerms::output_space_sum() const {
    double acc = 0.0;
    for (double v : output_space) {
        acc += v;
    }
    return acc;
}

double space_logprob(const SpaceModel& model, std::span<const double> x, double t, std::span<const SpacePoint> history) {
    if (const auto* pw = std::get_if<GmmPairwiseParams>(&model)) {
        return gmm_pairwise_logprob(*pw, x, t, history);
    }
    return gmm_kcluster_logprob(std::get<GmmKClusterParams>(model), x);
}

std::vector<double> space_mean(const SpaceModel& model, double t, std::span<const SpacePoint> history) {
    if (const auto* pw = std::get_if<GmmPairwiseParams>(&model)) {
        return gmm_pairwise_mean(*pw, t, history);
    }
    return gmm_kcluster_mean(std::get<GmmKClusterParams>(model));
}

BaselineLossTerms baseline_loss(const BaselineModels& models, std::span<const double> times,
                                const std::vector<std::vector<double>>& locations, std::size_t n_in,
                                const BaselineOptions& opts) {
    if (!models.time && !models.space) {
        throw std::invalid_argument("baseline loss needs a time model, a space model, or both");
    }
    if (times.size() != locations.size()) {
        throw std::invalid_argument("times and locations differ in length");
    }
    if (n_in == 0 || n_in >= times.size()) {
        throw std::invalid_argument("need at least one history event and one output event");
    }
    const std::size_t n_out = times.size() - n_in;
    BaselineLossTerms terms;

    if (models.time) {
        const auto& tm = *models.time;
        const auto history = times.first(n_in);
        if (!opts.test_mode) {
            terms.history_time = nll_temporal(tm, history);
        }
        terms.t_hat = sequential_predict(tm, std::vector<double>(history.begin(), history.end()), n_out, opts.moment);
        std::vector<double> updated(history.begin(), history.end());
        for (std::size_t l = 0; l < n_out; ++l) {
            const double interval = times[n_in + l] - times[n_in + l - 1];
            terms.output_time.push_back(-next_event_logpdf(tm, updated.back() + interval, updated));
            updated.push_back(terms.t_hat[l]);
            terms.reg_time += std::abs(times[n_in + l] - terms.t_hat[l]);
        }
    }

    if (models.space) {
        const auto& sm = *models.space;
        std::vector<SpacePoint> points;
        points.reserve(times.size());
        for (std::size_t i = 0; i < times.size(); ++i) {
            points.push_back(SpacePoint{times[i], locations[i]});
        }
        if (!opts.test_mode) {
            // Events with no predecessor have no conditional density under the
            // pairwise model and are skipped.
            const bool pairwise = std::holds_alternative<GmmPairwiseParams>(sm);
            for (std::size_t i = pairwise ? 1 : 0; i < n_in; ++i) {
                terms.history_space -=
                    space_logprob(sm, locations[i], times[i], std::span<const SpacePoint>(points.data(), i));
            }
        }
        std::vector<SpacePoint> predicted(points.begin(), points.begin() + static_cast<std::ptrdiff_t>(n_in));
        for (std::size_t l = 0; l < n_out; ++l) {
            const std::size_t i = n_in + l;
            const auto hist = opts.space_history_true ? std::span<const SpacePoint>(points.data(), i)
                                                      : std::span<const SpacePoint>(predicted);
            terms.output_space.push_back(-space_logprob(sm, locations[i], times[i], hist));
            const double t_pred = terms.t_hat.empty() ? times[i] : terms.t_hat[l];
            auto x_hat = space_mean(sm, t_pred, hist);
            terms.reg_space += l2_distance(locations[i], x_hat);
            predicted.push_back(SpacePoint{t_pred, x_hat});
            terms.x_hat.push_back(std::move(x_hat));
        }
    }

    terms.total = terms.output_time_sum() + terms.output_space_sum();
    if (!opts.test_mode) {
        terms.total += terms.history_time + terms.history_space + opts.lambda1 * terms.reg_time +
                       opts.lambda2 * terms.reg_space;
    }
    return terms;
}

}  // namespace stpp::classical
