#pragma once

#include "stpp/baseline.hpp"
#include "stpp/events.hpp"
#include "stpp/train.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stpp::pipeline {

/// Dataset-level glue between the normalized splits and the classical
/// baselines. Baselines see times in dt_max units from the window start and
/// standardized locations, the same units the network is scored in.

enum class BaselineKind { homo_poisson, hawkes, self_correcting, gmm_pairwise, gmm_kcluster, gaussian };

[[nodiscard]] std::string to_string(BaselineKind k);
[[nodiscard]] BaselineKind baseline_kind_from_string(const std::string& name);
[[nodiscard]] bool is_temporal(BaselineKind k);

struct BaselineFitConfig {
    classical::DescentConfig descent{};
    std::size_t clusters{15};
    classical::KClusterConfig kcluster{};
    std::size_t min_history{2};
};

[[nodiscard]] std::vector<std::vector<double>> time_sequences(std::span<const events::EventSequence> split);
[[nodiscard]] std::vector<std::vector<classical::SpacePoint>> space_sequences(
    std::span<const events::EventSequence> split);

/// Fits one baseline on the normalized training split and returns its JSON
/// artifact (temporal fit or space model).
[[nodiscard]] classical::FitResult fit_temporal(BaselineKind kind, std::span<const events::EventSequence> train,
                                                const BaselineFitConfig& cfg = {});
[[nodiscard]] classical::SpaceModel fit_space(BaselineKind kind, std::span<const events::EventSequence> train,
                                              const BaselineFitConfig& cfg = {});

/// Test-protocol NLL of the output events (regularizers excluded) per
/// sequence, summed over the L outputs. Missing halves report zero.
[[nodiscard]] train::EvalResult evaluate_baseline(const classical::BaselineModels& models,
                                                  std::span<const events::EventSequence> split,
                                                  const classical::BaselineOptions& opts = {});

}  // namespace stpp::pipeline
