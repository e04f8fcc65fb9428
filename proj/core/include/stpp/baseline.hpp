#pragma once

#include "stpp/gmm.hpp"
#include "stpp/temporal.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace stpp::classical {

using SpaceModel = std::variant<GmmPairwiseParams, GmmKClusterParams>;

/// Either model may be absent; its terms are then omitted from the loss.
struct BaselineModels {
    std::optional<TemporalModelParams> time;
    std::optional<SpaceModel> space;
};

struct BaselineOptions {
    double lambda1{0.1};
    double lambda2{0.1};
    /// Report only the NLL of the output events, without regularizers.
    bool test_mode{false};
    /// Condition the spatial density of output l on the true past locations
    /// (otherwise on the predicted ones).
    bool space_history_true{true};
    MomentConfig moment{};
};

/// Components of the regularized baseline loss for one sequence.
struct BaselineLossTerms {
    double history_time{0.0};
    double history_space{0.0};
    /// Per output event.
    std::vector<double> output_time;
    std::vector<double> output_space;
    double reg_time{0.0};
    double reg_space{0.0};
    double total{0.0};
    std::vector<double> t_hat;
    std::vector<std::vector<double>> x_hat;

    [[nodiscard]] double output_time_sum() const;
    [[nodiscard]] double output_space_sum() const;
};

/// Regularized loss of a sequence whose first n_in events form the history and
/// whose remaining events are the L outputs.
///
/// Times are predicted sequentially by the first-order moment; each output
/// time is scored through the density of its true interval measured from the
/// last event of the updated history. Spatial outputs are scored with the
/// space model at their true times, and x_hat is the mixture mean at t_hat.
[[nodiscard]] BaselineLossTerms baseline_loss(const BaselineModels& models, std::span<const double> times,
                                              const std::vector<std::vector<double>>& locations, std::size_t n_in,
                                              const BaselineOptions& opts = {});

[[nodiscard]] double space_logprob(const SpaceModel& model, std::span<const double> x, double t,
                                   std::span<const SpacePoint> history);
[[nodiscard]] std::vector<double> space_mean(const SpaceModel& model, double t, std::span<const SpacePoint> history);

}  // namespace stpp::classical
