#pragma once

#include "stpp/descent.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stpp::classical {

enum class TemporalKind { poisson, hawkes, self_correcting };

[[nodiscard]] std::string to_string(TemporalKind kind);
[[nodiscard]] TemporalKind temporal_kind_from_string(const std::string& name);

/// Parameters of the parametric temporal intensities.
///
///   poisson          lambda(t) = rate
///   hawkes           lambda(t) = mu + alpha * sum_{t_i < t} (1/beta) exp(-(t - t_i)/beta)
///   self_correcting  lambda(t) = exp(mu + alpha * t - beta * N(t))
///
/// For hawkes, alpha is the branching ratio (kernel mass) and beta the decay
/// time scale, so the stationary rate is mu / (1 - alpha) when alpha < 1.
struct TemporalModelParams {
    TemporalKind kind{TemporalKind::poisson};
    double rate{1.0};
    double mu{0.0};
    double alpha{0.0};
    double beta{1.0};

    static TemporalModelParams poisson(double rate);
    static TemporalModelParams hawkes(double mu, double alpha, double beta);
    static TemporalModelParams self_correcting(double mu, double alpha, double beta);

    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
    [[nodiscard]] bool stationary() const;
};

/// Conditional intensity at t given history times (only t_i < t contribute).
/// Requires t >= the last history time.
[[nodiscard]] double intensity(const TemporalModelParams& model, double t, std::span<const double> history);

/// Integral of the intensity over [a, b]. History events inside (a, b) are
/// honoured; b may be +infinity for decaying hawkes kernels.
[[nodiscard]] double compensator(const TemporalModelParams& model, double a, double b,
                                 std::span<const double> history);

/// Point-process negative log-likelihood of `times` observed on
/// [t_start, t_end]: -sum log lambda(t_i) + compensator(t_start, t_end).
[[nodiscard]] double nll_temporal(const TemporalModelParams& model, std::span<const double> times,
                                  double t_start, double t_end);
/// Observation window [times.front(), times.back()].
[[nodiscard]] double nll_temporal(const TemporalModelParams& model, std::span<const double> times);

/// Log density of the next event occurring at `t` given the history
/// (log lambda(t) - compensator(last, t)).
[[nodiscard]] double next_event_logpdf(const TemporalModelParams& model, double t, std::span<const double> history);

struct FitResult {
    TemporalModelParams params;
    double nll{0.0};
    std::size_t iters{0};
    bool converged{false};
};

/// Maximum-likelihood fit minimizing the mean per-sequence NLL. Each
/// sequence is observed on [front, back]. Positivity is by construction
/// (log parameters) except hawkes alpha, which is projected onto [0, inf).
[[nodiscard]] FitResult fit_mle(TemporalKind kind, const std::vector<std::vector<double>>& sequences,
                                const DescentConfig& cfg = {});
[[nodiscard]] FitResult fit_mle(const TemporalModelParams& init, const std::vector<std::vector<double>>& sequences,
                                const DescentConfig& cfg = {});

/// Mean-NLL gradient with respect to (rate) / (mu, alpha, beta); analytic for
/// poisson and hawkes, central differences for self-correcting.
[[nodiscard]] std::vector<double> nll_gradient(const TemporalModelParams& model,
                                               const std::vector<std::vector<double>>& sequences);

struct MomentConfig {
    /// Integration stops where the survival probability falls below this.
    double survival_cutoff{1e-10};
    double rel_tol{1e-12};
    /// Horizon growth limit (in units of the initial scale) before the
    /// distribution is declared defective.
    double max_horizon_factor{1e12};
};

/// First-order moment E[t_{n+1} | history] = int t lambda(t) S(t) dt over
/// (t_n, inf), truncated where S(t) < survival_cutoff.
[[nodiscard]] double expected_next_time(const TemporalModelParams& model, std::span<const double> history,
                                        const MomentConfig& cfg = {});

/// L steps of expected_next_time, appending each prediction to the history.
[[nodiscard]] std::vector<double> sequential_predict(const TemporalModelParams& model,
                                                     std::vector<double> history, std::size_t steps,
                                                     const MomentConfig& cfg = {});

/// O(1)-per-query intensity tracker for thinning. Events must be added in
/// nondecreasing time order.
class IntensityTracker {
public:
    explicit IntensityTracker(TemporalModelParams model);

    /// lambda(t) for t >= last event time, counting events strictly before t.
    [[nodiscard]] double at(double t) const;
    /// lambda just after the last event, that event included.
    [[nodiscard]] double right_limit() const;
    void add_event(double t);
    [[nodiscard]] std::size_t count() const { return count_; }
    [[nodiscard]] const TemporalModelParams& model() const { return model_; }

private:
    TemporalModelParams model_;
    double last_{0.0};
    double excitation_{0.0};  // sum_i exp(-(last - t_i)/beta), events up to and including last
    std::size_t count_{0};
};

}  // namespace stpp::classical
