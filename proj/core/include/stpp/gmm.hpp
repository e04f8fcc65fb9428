#pragma once

#include "stpp/descent.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stpp::classical {

/// A past event as seen by the spatial baselines.
struct SpacePoint {
    double t{0.0};
    std::vector<double> x;
};

/// History-conditioned Gaussian mixture
///   p(x | t, H) = sum_i w_i(t) N(x; x_i, diag(scales^2)),
///   w_i(t) proportional to exp(-gamma (t - t_i)).
struct GmmPairwiseParams {
    std::vector<double> scales;
    double gamma{1.0};

    void validate() const;
};

[[nodiscard]] double gmm_pairwise_logprob(const GmmPairwiseParams& params, std::span<const double> x, double t,
                                          std::span<const SpacePoint> history);
/// Mixture mean sum_i w_i(t) x_i.
[[nodiscard]] std::vector<double> gmm_pairwise_mean(const GmmPairwiseParams& params, double t,
                                                    std::span<const SpacePoint> history);

struct PairwiseFitResult {
    GmmPairwiseParams params;
    double nll{0.0};
    std::size_t iters{0};
    bool converged{false};
};

/// Mean held-in NLL of every event i >= min_history given its predecessors.
[[nodiscard]] double gmm_pairwise_nll(const GmmPairwiseParams& params,
                                      const std::vector<std::vector<SpacePoint>>& sequences,
                                      std::size_t min_history = 2);

/// Fits (scales, gamma) in log space by gradient descent on gmm_pairwise_nll.
[[nodiscard]] PairwiseFitResult gmm_pairwise_fit(const std::vector<std::vector<SpacePoint>>& sequences,
                                                 const GmmPairwiseParams& init,
                                                 std::size_t min_history = 2,
                                                 const DescentConfig& cfg = {});

struct GmmComponent {
    std::vector<double> mean;
    std::vector<double> cov;  // row-major d x d
    double weight{0.0};
};

struct GmmKClusterParams {
    std::size_t d{0};
    std::vector<GmmComponent> components;
    /// Log-likelihood after each EM iteration.
    std::vector<double> loglik_trace;
};

struct KClusterConfig {
    std::size_t max_iters{200};
    double tol{1e-10};
    /// Ridge added to every covariance diagonal.
    double reg{1e-6};
    std::uint64_t seed{0};
    std::size_t max_reseeds{3};
};

/// EM for a K-component full-covariance mixture with k-means++ seeding.
/// Throws std::runtime_error when a component empties on every reseed.
[[nodiscard]] GmmKClusterParams gmm_kcluster_fit(const std::vector<std::vector<double>>& points, std::size_t k,
                                                 const KClusterConfig& cfg = {});
[[nodiscard]] double gmm_kcluster_logprob(const GmmKClusterParams& params, std::span<const double> x);
[[nodiscard]] std::vector<double> gmm_kcluster_mean(const GmmKClusterParams& params);

}  // namespace stpp::classical
