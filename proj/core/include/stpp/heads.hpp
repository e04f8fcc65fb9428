#pragma once

#include "stpp/autodiff.hpp"
#include "stpp/neural.hpp"
#include "stpp/params.hpp"

#include <cstddef>
#include <vector>

namespace stpp {
class Rng;
}

namespace stpp::heads {

using ad::Array;
using ad::ParamStore;
using ad::Tape;
using ad::Var;
using neural::NetConfig;
using neural::TimeFlow;

/// Floor added to the softplus-parameterized exponential scale.
inline constexpr double kBetaFloor = 1e-6;

// Time bijections from the exponential base's support (0, inf).

/// t = z / (z + 1), mapping (0, inf) onto (0, 1).
[[nodiscard]] double softsign_fwd(double z);
[[nodiscard]] double softsign_inv(double t);
/// log |dt/dz| = -2 log(1 + z)
[[nodiscard]] double softsign_logdet(double z);

/// t = log(1 + e^z) - log 2, mapping (0, inf) onto (0, inf).
[[nodiscard]] double softplus_flow_fwd(double z);
[[nodiscard]] double softplus_flow_inv(double t);
/// log |dt/dz| = log sigmoid(z)
[[nodiscard]] double softplus_flow_logdet(double z);

[[nodiscard]] double time_flow_fwd(TimeFlow flow, double z);
[[nodiscard]] double time_flow_inv(TimeFlow flow, double t);
[[nodiscard]] double time_flow_logdet(TimeFlow flow, double z);

/// Exponential base density (1/beta) exp(-z/beta). Throws for z <= 0.
[[nodiscard]] double exp_logprob(double z, double beta);
/// Inverse-CDF draw z = -beta log(1 - u).
[[nodiscard]] double exp_sample(double beta, Rng& rng);

/// log p(t) of the flowed time density, scalar form.
/// Throws std::domain_error when t is outside the flow's range.
[[nodiscard]] double time_logprob(double t, double beta, TimeFlow flow);

/// Adds the exponential scale map, the Gaussian parameter network and the
/// coupling networks. The last layer of each coupling network starts small
/// so the flow begins close to the identity.
void init_head_params(ParamStore& params, const NetConfig& cfg, Rng& rng);

/// beta_l = softplus(a h_t_l + c) + 1e-6, shape (batch, L).
[[nodiscard]] Var exp_head(Tape& tape, const ParamStore& params, Var h_t_l);

/// log p_l(t) for normalized intervals t of shape (batch, L).
[[nodiscard]] Var log_prob_time(Var beta, const Array& t, TimeFlow flow);

/// Gaussian head output: mean, positive Cholesky diagonal and strictly lower
/// entries in row-major order ((1,0), (2,0), (2,1), ...).
struct MvnHeadOut {
    Var mu;    // (batch, L, d)
    Var diag;  // (batch, L, d)
    Var off;   // (batch, L, d(d-1)/2)
};

/// Parameters of the Gaussian from concat(h_x_l, t_l) with t_l (batch, L, 1).
[[nodiscard]] MvnHeadOut mvn_head(Tape& tape, const ParamStore& params, const NetConfig& cfg, Var h_x_l, Var t_l);

/// log N(z; mu, L L^T), shape (batch, L).
[[nodiscard]] Var mvn_logprob(const MvnHeadOut& head, Var z);

/// Coupling-flow maps with context h (same leading shape as x).
/// `logdet` receives log |det dF/dz| (forward) or log |det dF^-1/dx| (inverse).
[[nodiscard]] Var realnvp_fwd(Tape& tape, const ParamStore& params, const NetConfig& cfg, Var z, Var ctx,
                              Var* logdet = nullptr);
[[nodiscard]] Var realnvp_inv(Tape& tape, const ParamStore& params, const NetConfig& cfg, Var x, Var ctx,
                              Var* logdet = nullptr);

/// Binary mask of coupling layer `layer`: 1 marks coordinates passed through.
[[nodiscard]] Array coupling_mask(std::size_t d, std::size_t layer);

/// log p_l(x | t_l, h_x_l), shape (batch, L).
[[nodiscard]] Var log_prob_space(Tape& tape, const ParamStore& params, const NetConfig& cfg, Var x, Var t_l,
                                 Var h_x_l);

/// Draws one location per row: inputs (S, 1, d) and (S, 1, 1), output (S, 1, d).
[[nodiscard]] Array sample_space(const ParamStore& params, const NetConfig& cfg, const Array& h_x_l,
                                 const Array& t_l, Rng& rng);

/// z = mu + L eps for one Gaussian given its mean, diagonal and lower entries.
[[nodiscard]] std::vector<double> mvn_sample(const std::vector<double>& mu, const std::vector<double>& diag,
                                             const std::vector<double>& off, Rng& rng);

}  // namespace stpp::heads
