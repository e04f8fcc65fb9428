#pragma once

#include "stpp/autodiff.hpp"
#include "stpp/params.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>

namespace stpp {
class Rng;
}

namespace stpp::neural {

using ad::Array;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

enum class TimeFlow { softsign, softplus };

[[nodiscard]] std::string to_string(TimeFlow f);
[[nodiscard]] TimeFlow time_flow_from_string(const std::string& name);

/// Network and head hyper-parameters. Defaults follow the full-size preset.
struct NetConfig {
    std::size_t d_space{2};
    std::size_t d_model{64};
    std::size_t n_layers{6};
    std::size_t n_heads{6};
    /// Per-head query/key/value width; 0 means ceil(d_model / n_heads).
    std::size_t head_dim{0};
    std::size_t ff_mult{4};
    double dropout{0.1};
    std::size_t n_in{497};
    std::size_t l_out{3};

    TimeFlow time_flow{TimeFlow::softsign};
    std::size_t flow_layers{4};
    std::size_t flow_hidden{32};
    /// Hidden width of the Gaussian head's parameter network.
    std::size_t head_hidden{32};

    [[nodiscard]] std::size_t features() const { return d_space + 2; }
    [[nodiscard]] std::size_t resolved_head_dim() const;
    /// Throws std::invalid_argument listing every violated constraint.
    void validate() const;
};

[[nodiscard]] nlohmann::json to_json(const NetConfig& cfg);
[[nodiscard]] NetConfig net_config_from_json(const nlohmann::json& j);

/// Dropout switch and its generator (required when train is true and the
/// rate is positive).
struct Mode {
    bool train{false};
    Rng* rng{nullptr};
};

struct EncodedHistory {
    Var h_t;  // (batch, n, d_model)
    Var h_x;  // (batch, n, d_model)
};

struct DecodedOutputs {
    Var h_t_l;  // (batch, L, 1)
    Var h_x_l;  // (batch, L, d_space)
};

/// Adds the encoder, decoder and output projection weights, initialized
/// uniformly in +-1/sqrt(fan_in).
void init_network_params(ParamStore& params, const NetConfig& cfg, Rng& rng);

/// Sinusoidal positional table of shape (len, d_model).
[[nodiscard]] Array positional_encoding(std::size_t len, std::size_t d_model);

/// Strictly-upper-triangular mask (1 = hidden) of shape (len, len).
[[nodiscard]] Array causal_mask(std::size_t len);

/// softmax(q k^T / sqrt(d_k)) v with optional mask (nonzero = hidden).
[[nodiscard]] Var attention(Var q, Var k, Var v, const Array* mask = nullptr);

/// Multi-head attention block `prefix` (Wq, Wk, Wv, Wo, bo).
[[nodiscard]] Var multi_head_attention(Tape& tape, const ParamStore& params, const NetConfig& cfg,
                                       const std::string& prefix, Var query_in, Var memory, const Array* mask);

/// Affine-ELU-affine embedding to d_model plus positional encoding.
/// `which` is "enc" or "dec"; `stream` is "time" or "space".
[[nodiscard]] Var embed_events(Tape& tape, const ParamStore& params, const NetConfig& cfg, const std::string& stream,
                               const std::string& which, const Array& events, const Mode& mode);
[[nodiscard]] Var embed_events(Tape& tape, const ParamStore& params, const NetConfig& cfg, const std::string& stream,
                               const std::string& which, Var events, const Mode& mode);

[[nodiscard]] EncodedHistory encoder_forward(Tape& tape, const ParamStore& params, const NetConfig& cfg,
                                             const Array& enc_in, const Mode& mode, bool causal = true);
/// Same, with a differentiable input (for input-gradient checks).
[[nodiscard]] EncodedHistory encoder_forward(Tape& tape, const ParamStore& params, const NetConfig& cfg, Var enc_in,
                                             const Mode& mode, bool causal = true);

[[nodiscard]] DecodedOutputs decoder_forward(Tape& tape, const ParamStore& params, const NetConfig& cfg,
                                             const Array& dec_in, const EncodedHistory& history, const Mode& mode);

}  // namespace stpp::neural
