#include "stpp/neural.hpp"

#include "stpp/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace stpp::neural {

std::string to_string(TimeFlow f) {
    return f == TimeFlow::softsign ? "softsign" : "softplus";
}

TimeFlow time_flow_from_string(const std::string& name) {
    if (name == "softsign") {
        return TimeFlow::softsign;
    }
    if (name == "softplus") {
        return TimeFlow::softplus;
    }
    throw std::invalid_argument("unknown time flow '" + name + "' (expected softsign or softplus)");
}

std::size_t NetConfig::resolved_head_dim() const {
    if (head_dim > 0) {
        return head_dim;
    }
    // Rounded up: 64 wide with 6 heads gives 11 per head, and Wo maps 66 back to 64.
    return n_heads == 0 ? 0 : (d_model + n_heads - 1) / n_heads;
}

void NetConfig::validate() const {
    std::vector<std::string> errors;
    if (d_space < 2 || d_space > 3) {
        errors.emplace_back("d_space must be 2 or 3");
    }
    if (d_model == 0) {
        errors.emplace_back("d_model must be positive");
    }
    if (n_layers == 0) {
        errors.emplace_back("n_layers must be positive");
    }
    if (n_heads == 0) {
        errors.emplace_back("n_heads must be positive");
    }
    if (ff_mult == 0) {
        errors.emplace_back("ff_mult must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        errors.emplace_back("dropout must be in [0, 1)");
    }
    if (n_in == 0 || l_out == 0) {
        errors.emplace_back("n_in and l_out must be positive");
    }
    if (flow_hidden == 0 || head_hidden == 0) {
        errors.emplace_back("flow_hidden and head_hidden must be positive");
    }
    if (!errors.empty()) {
        std::string msg = "invalid network config:";
        for (const auto& e : errors) {
            msg += "\n  - " + e;
        }
        throw std::invalid_argument(msg);
    }
}

nlohmann::json to_json(const NetConfig& c) {
    return {{"d_space", c.d_space},     {"d_model", c.d_model},         {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},     {"head_dim", c.head_dim},       {"ff_mult", c.ff_mult},
            {"dropout", c.dropout},     {"n_in", c.n_in},               {"l_out", c.l_out},
            {"time_flow", to_string(c.time_flow)}, {"flow_layers", c.flow_layers},
            {"flow_hidden", c.flow_hidden}, {"head_hidden", c.head_hidden}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.d_space = j.at("d_space").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.head_dim = j.value("head_dim", std::size_t{0});
    c.ff_mult = j.value("ff_mult", std::size_t{4});
    c.dropout = j.at("dropout").get<double>();
    c.n_in = j.at("n_in").get<std::size_t>();
    c.l_out = j.at("l_out").get<std::size_t>();
    c.time_flow = time_flow_from_string(j.value("time_flow", std::string("softsign")));
    c.flow_layers = j.value("flow_layers", std::size_t{4});
    c.flow_hidden = j.value("flow_hidden", std::size_t{32});
    c.head_hidden = j.value("head_hidden", std::size_t{32});
    c.validate();
    return c;
}

namespace {

Array uniform_init(ad::Shape shape, std::size_t fan_in, Rng& rng) {
    Array a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : a.values()) {
        v = bound * (2.0 * rng.uniform() - 1.0);
    }
    return a;
}

void add_linear(ParamStore& p, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                const std::string& w = "W", const std::string& b = "b") {
    p.add(prefix + "." + w, uniform_init({in, out}, in, rng));
    p.add(prefix + "." + b, uniform_init({out}, in, rng));
}

void add_layer_norm(ParamStore& p, const std::string& prefix, std::size_t d) {
    p.add(prefix + ".g", Array({d}, 1.0));
    p.add(prefix + ".b", Array({d}, 0.0));
}

void add_attention(ParamStore& p, const std::string& prefix, const NetConfig& cfg, Rng& rng) {
    const std::size_t inner = cfg.n_heads * cfg.resolved_head_dim();
    p.add(prefix + ".Wq", uniform_init({cfg.d_model, inner}, cfg.d_model, rng));
    p.add(prefix + ".Wk", uniform_init({cfg.d_model, inner}, cfg.d_model, rng));
    p.add(prefix + ".Wv", uniform_init({cfg.d_model, inner}, cfg.d_model, rng));
    p.add(prefix + ".Wo", uniform_init({inner, cfg.d_model}, inner, rng));
    p.add(prefix + ".bo", uniform_init({cfg.d_model}, inner, rng));
}

void add_ff(ParamStore& p, const std::string& prefix, const NetConfig& cfg, Rng& rng) {
    const std::size_t hidden = cfg.ff_mult * cfg.d_model;
    add_linear(p, prefix, cfg.d_model, hidden, rng, "W1", "b1");
    add_linear(p, prefix, hidden, cfg.d_model, rng, "W2", "b2");
}

Var lin(Tape& t, const ParamStore& p, const std::string& prefix, Var x, const std::string& w = "W",
        const std::string& b = "b") {
    return ad::linear(x, p.bind(t, prefix + "." + w), p.bind(t, prefix + "." + b));
}

Var norm(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
    return ad::layer_norm(x, p.bind(t, prefix + ".g"), p.bind(t, prefix + ".b"));
}

Var drop(Var x, const NetConfig& cfg, const Mode& mode) {
    if (!mode.train || cfg.dropout == 0.0) {
        return x;
    }
    if (mode.rng == nullptr) {
        throw std::invalid_argument("training-mode dropout needs a generator");
    }
    return ad::dropout(x, cfg.dropout, true, *mode.rng);
}

Var feed_forward(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
    return lin(t, p, prefix, ad::elu(lin(t, p, prefix, x, "W1", "b1")), "W2", "b2");
}

std::string layer_prefix(const std::string& stream, const char* part, std::size_t i) {
    return stream + "." + part + ".layer" + std::to_string(i);
}

}  // namespace

void init_network_params(ParamStore& params, const NetConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t f = cfg.features();
    for (const std::string stream : {"time", "space"}) {
        for (const std::string which : {"enc", "dec"}) {
            const std::string pre = stream + "." + which + "_embed";
            add_linear(params, pre, f, cfg.d_model, rng, "W1", "b1");
            add_linear(params, pre, cfg.d_model, cfg.d_model, rng, "W2", "b2");
        }
        for (std::size_t i = 0; i < cfg.n_layers; ++i) {
            const auto pre = layer_prefix(stream, "enc", i);
            add_attention(params, pre + ".attn", cfg, rng);
            add_layer_norm(params, pre + ".ln1", cfg.d_model);
            add_ff(params, pre + ".ff", cfg, rng);
            add_layer_norm(params, pre + ".ln2", cfg.d_model);
        }
        for (std::size_t i = 0; i < cfg.n_layers; ++i) {
            const auto pre = layer_prefix(stream, "dec", i);
            add_attention(params, pre + ".self_attn", cfg, rng);
            add_layer_norm(params, pre + ".ln1", cfg.d_model);
            add_attention(params, pre + ".cross_attn", cfg, rng);
            add_layer_norm(params, pre + ".ln2", cfg.d_model);
            add_ff(params, pre + ".ff", cfg, rng);
            add_layer_norm(params, pre + ".ln3", cfg.d_model);
        }
        const std::size_t out_dim = stream == "time" ? 1 : cfg.d_space;
        add_linear(params, stream + ".out", cfg.d_model, cfg.d_model, rng, "W1", "b1");
        add_linear(params, stream + ".out", cfg.d_model, out_dim, rng, "W2", "b2");
    }
}

Array positional_encoding(std::size_t len, std::size_t d_model) {
    Array pe({len, d_model});
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * rate;
            pe[pos * d_model + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Array causal_mask(std::size_t len) {
    Array m({len, len});
    for (std::size_t q = 0; q < len; ++q) {
        for (std::size_t k = q + 1; k < len; ++k) {
            m[q * len + k] = 1.0;
        }
    }
    return m;
}

Var attention(Var q, Var k, Var v, const Array* mask) {
    const std::size_t dk = q.value().dim(-1);
    Var scores = ad::mul(ad::matmul(q, ad::transpose(k, -2, -1)), 1.0 / std::sqrt(static_cast<double>(dk)));
    if (mask != nullptr) {
        scores = ad::masked_fill(scores, *mask);
    }
    return ad::matmul(ad::softmax(scores, -1), v);
}

Var multi_head_attention(Tape& t, const ParamStore& p, const NetConfig& cfg, const std::string& prefix, Var query_in,
                         Var memory, const Array* mask) {
    const std::size_t b = query_in.value().dim(0);
    const std::size_t lq = query_in.value().dim(1);
    const std::size_t lk = memory.value().dim(1);
    const std::size_t h = cfg.n_heads;
    const std::size_t hd = cfg.resolved_head_dim();
    const auto split_heads = [&](Var x, std::size_t len) {
        return ad::transpose(ad::reshape(x, {b, len, h, hd}), 1, 2);  // (b, h, len, hd)
    };
    Var q = split_heads(ad::matmul(query_in, p.bind(t, prefix + ".Wq")), lq);
    Var k = split_heads(ad::matmul(memory, p.bind(t, prefix + ".Wk")), lk);
    Var v = split_heads(ad::matmul(memory, p.bind(t, prefix + ".Wv")), lk);
    Var o = attention(q, k, v, mask);
    o = ad::reshape(ad::transpose(o, 1, 2), {b, lq, h * hd});
    return ad::linear(o, p.bind(t, prefix + ".Wo"), p.bind(t, prefix + ".bo"));
}

Var embed_events(Tape& t, const ParamStore& p, const NetConfig& cfg, const std::string& stream,
                 const std::string& which, Var events, const Mode& mode) {
    const ad::Shape s = events.shape();
    if (s.size() != 3 || s[2] != cfg.features()) {
        throw std::invalid_argument("embed_events expects (batch, len, " + std::to_string(cfg.features()) +
                                    "), got " + ad::shape_string(s));
    }
    const std::string pre = stream + "." + which + "_embed";
    Var e = lin(t, p, pre, ad::elu(lin(t, p, pre, events, "W1", "b1")), "W2", "b2");
    e = ad::add(e, t.constant(positional_encoding(s[1], cfg.d_model)));
    return drop(e, cfg, mode);
}

Var embed_events(Tape& t, const ParamStore& p, const NetConfig& cfg, const std::string& stream,
                 const std::string& which, const Array& events, const Mode& mode) {
    return embed_events(t, p, cfg, stream, which, t.constant(events), mode);
}

EncodedHistory encoder_forward(Tape& t, const ParamStore& p, const NetConfig& cfg, const Array& enc_in,
                               const Mode& mode, bool causal) {
    return encoder_forward(t, p, cfg, t.constant(enc_in), mode, causal);
}

EncodedHistory encoder_forward(Tape& t, const ParamStore& p, const NetConfig& cfg, Var enc_in, const Mode& mode,
                               bool causal) {
    const std::size_t n = enc_in.shape().at(1);
    const Array mask = causal_mask(n);
    const Array* m = causal ? &mask : nullptr;
    EncodedHistory out;
    for (const std::string stream : {"time", "space"}) {
        Var h = embed_events(t, p, cfg, stream, "enc", enc_in, mode);
        for (std::size_t i = 0; i < cfg.n_layers; ++i) {
            const auto pre = layer_prefix(stream, "enc", i);
            Var a = drop(multi_head_attention(t, p, cfg, pre + ".attn", h, h, m), cfg, mode);
            h = norm(t, p, pre + ".ln1", ad::add(h, a));
            Var f = drop(feed_forward(t, p, pre + ".ff", h), cfg, mode);
            h = norm(t, p, pre + ".ln2", ad::add(h, f));
        }
        (stream == "time" ? out.h_t : out.h_x) = h;
    }
    return out;
}

DecodedOutputs decoder_forward(Tape& t, const ParamStore& p, const NetConfig& cfg, const Array& dec_in,
                               const EncodedHistory& history, const Mode& mode) {
    const std::size_t l = dec_in.dim(1);
    const Array mask = causal_mask(l);
    DecodedOutputs out;
    for (const std::string stream : {"time", "space"}) {
        const Var memory = stream == "time" ? history.h_t : history.h_x;
        Var h = embed_events(t, p, cfg, stream, "dec", dec_in, mode);
        for (std::size_t i = 0; i < cfg.n_layers; ++i) {
            const auto pre = layer_prefix(stream, "dec", i);
            Var a = drop(multi_head_attention(t, p, cfg, pre + ".self_attn", h, h, &mask), cfg, mode);
            h = norm(t, p, pre + ".ln1", ad::add(h, a));
            // Every output slot attends to the whole history: no look-ahead mask.
            Var c = drop(multi_head_attention(t, p, cfg, pre + ".cross_attn", h, memory, nullptr), cfg, mode);
            h = norm(t, p, pre + ".ln2", ad::add(h, c));
            Var f = drop(feed_forward(t, p, pre + ".ff", h), cfg, mode);
            h = norm(t, p, pre + ".ln3", ad::add(h, f));
        }
        Var o = lin(t, p, stream + ".out", ad::elu(lin(t, p, stream + ".out", h, "W1", "b1")), "W2", "b2");
        (stream == "time" ? out.h_t_l : out.h_x_l) = o;
    }
    return out;
}

}  // namespace stpp::neural
