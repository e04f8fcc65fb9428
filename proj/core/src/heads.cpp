#include "stpp/heads.hpp"

#include "stpp/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stpp::heads {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLn2 = std::numbers::ln2;

double log_sigmoid(double z) {
    return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

Array uniform_init(ad::Shape shape, std::size_t fan_in, double gain, Rng& rng) {
    Array a(std::move(shape));
    const double bound = gain / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : a.values()) {
        v = bound * (2.0 * rng.uniform() - 1.0);
    }
    return a;
}

std::string flow_prefix(std::size_t layer, const char* net) {
    return "flow.layer" + std::to_string(layer) + "." + net;
}

Var coupling_net(Tape& t, const ParamStore& p, const std::string& pre, Var in) {
    Var h = ad::elu(ad::linear(in, p.bind(t, pre + ".W1"), p.bind(t, pre + ".b1")));
    return ad::linear(h, p.bind(t, pre + ".W2"), p.bind(t, pre + ".b2"));
}

/// Scale and shift of one coupling layer, already zeroed on passed coordinates.
std::pair<Var, Var> coupling_terms(Tape& t, const ParamStore& p, std::size_t layer, Var passed, Var ctx,
                                   Var update_mask) {
    Var in = ad::concat({passed, ctx}, -1);
    Var s = ad::mul(ad::mul(ad::tanh(coupling_net(t, p, flow_prefix(layer, "s"), in)), 3.0), update_mask);
    Var u = ad::mul(coupling_net(t, p, flow_prefix(layer, "u"), in), update_mask);
    return {s, u};
}

}  // namespace

double softsign_fwd(double z) {
    if (!(z > 0.0)) {
        throw std::domain_error("softsign_fwd needs z > 0, got " + std::to_string(z));
    }
    return z / (z + 1.0);
}

double softsign_inv(double t) {
    if (!(t > 0.0 && t < 1.0)) {
        throw std::domain_error("softsign_inv needs 0 < t < 1, got " + std::to_string(t));
    }
    return t / (1.0 - t);
}

double softsign_logdet(double z) {
    if (!(z > 0.0)) {
        throw std::domain_error("softsign_logdet needs z > 0, got " + std::to_string(z));
    }
    return -2.0 * std::log1p(z);
}

double softplus_flow_fwd(double z) {
    if (!(z > 0.0)) {
        throw std::domain_error("softplus flow needs z > 0, got " + std::to_string(z));
    }
    return z + std::log1p(std::exp(-z)) - kLn2;
}

double softplus_flow_inv(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw std::domain_error("softplus flow inverse needs t > 0, got " + std::to_string(t));
    }
    // log(2 e^t - 1) written to stay accurate for small and large t.
    return t + std::log(2.0 - std::exp(-t));
}

double softplus_flow_logdet(double z) {
    if (!(z > 0.0)) {
        throw std::domain_error("softplus flow needs z > 0, got " + std::to_string(z));
    }
    return log_sigmoid(z);
}

double time_flow_fwd(TimeFlow flow, double z) {
    return flow == TimeFlow::softsign ? softsign_fwd(z) : softplus_flow_fwd(z);
}

double time_flow_inv(TimeFlow flow, double t) {
    return flow == TimeFlow::softsign ? softsign_inv(t) : softplus_flow_inv(t);
}

double time_flow_logdet(TimeFlow flow, double z) {
    return flow == TimeFlow::softsign ? softsign_logdet(z) : softplus_flow_logdet(z);
}

double exp_logprob(double z, double beta) {
    if (!(z > 0.0)) {
        throw std::domain_error("exponential log-density needs z > 0, got " + std::to_string(z));
    }
    if (!(beta > 0.0)) {
        throw std::domain_error("exponential scale must be positive");
    }
    return -std::log(beta) - z / beta;
}

double exp_sample(double beta, Rng& rng) {
    return -beta * std::log1p(-rng.uniform());
}

double time_logprob(double t, double beta, TimeFlow flow) {
    const double z = time_flow_inv(flow, t);
    return exp_logprob(z, beta) - time_flow_logdet(flow, z);
}

void init_head_params(ParamStore& p, const NetConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.d_space;
    p.add("head.time.w", uniform_init({1, 1}, 1, 1.0, rng));
    p.add("head.time.b", uniform_init({1}, 1, 1.0, rng));
    const std::size_t out = 2 * d + d * (d - 1) / 2;
    p.add("head.space.W1", uniform_init({d + 1, cfg.head_hidden}, d + 1, 1.0, rng));
    p.add("head.space.b1", uniform_init({cfg.head_hidden}, d + 1, 1.0, rng));
    p.add("head.space.W2", uniform_init({cfg.head_hidden, out}, cfg.head_hidden, 1.0, rng));
    p.add("head.space.b2", uniform_init({out}, cfg.head_hidden, 1.0, rng));
    for (std::size_t l = 0; l < cfg.flow_layers; ++l) {
        for (const char* net : {"s", "u"}) {
            const auto pre = flow_prefix(l, net);
            p.add(pre + ".W1", uniform_init({2 * d, cfg.flow_hidden}, 2 * d, 1.0, rng));
            p.add(pre + ".b1", uniform_init({cfg.flow_hidden}, 2 * d, 1.0, rng));
            p.add(pre + ".W2", uniform_init({cfg.flow_hidden, d}, cfg.flow_hidden, 0.1, rng));
            p.add(pre + ".b2", uniform_init({d}, cfg.flow_hidden, 0.1, rng));
        }
    }
}

Var exp_head(Tape& t, const ParamStore& p, Var h_t_l) {
    const ad::Shape s = h_t_l.shape();
    if (s.size() != 3 || s[2] != 1) {
        throw std::invalid_argument("exp_head expects (batch, L, 1), got " + ad::shape_string(s));
    }
    Var a = ad::linear(h_t_l, p.bind(t, "head.time.w"), p.bind(t, "head.time.b"));
    return ad::reshape(ad::add(ad::softplus(a), kBetaFloor), {s[0], s[1]});
}

Var log_prob_time(Var beta, const Array& t, TimeFlow flow) {
    if (beta.shape() != t.shape()) {
        throw std::invalid_argument("log_prob_time: beta " + ad::shape_string(beta.shape()) + " vs targets " +
                                    ad::shape_string(t.shape()));
    }
    Array z(t.shape());
    Array correction(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        double zi = 0.0;
        try {
            zi = time_flow_inv(flow, t[i]);
        } catch (const std::domain_error& e) {
            throw std::domain_error("time target at flat index " + std::to_string(i) + " is outside the flow range: " +
                                    e.what());
        }
        z[i] = zi;
        correction[i] = -time_flow_logdet(flow, zi);
    }
    Tape& tp = *beta.tape();
    Var lp = ad::sub(ad::negate(ad::log(beta)), ad::div(tp.constant(std::move(z)), beta));
    return ad::add(lp, tp.constant(std::move(correction)));
}

MvnHeadOut mvn_head(Tape& t, const ParamStore& p, const NetConfig& cfg, Var h_x_l, Var t_l) {
    const std::size_t d = cfg.d_space;
    Var in = ad::concat({h_x_l, t_l}, -1);
    Var h = ad::elu(ad::linear(in, p.bind(t, "head.space.W1"), p.bind(t, "head.space.b1")));
    Var o = ad::linear(h, p.bind(t, "head.space.W2"), p.bind(t, "head.space.b2"));
    MvnHeadOut out;
    out.mu = ad::slice(o, -1, 0, d);
    out.diag = ad::add(ad::softplus(ad::slice(o, -1, d, d)), kBetaFloor);
    out.off = ad::slice(o, -1, 2 * d, d * (d - 1) / 2);
    return out;
}

Var mvn_logprob(const MvnHeadOut& head, Var z) {
    const ad::Shape s = head.mu.shape();
    const std::size_t d = s.back();
    Var r = ad::sub(z, head.mu);
    std::vector<Var> y;
    Var quad;
    Var logdet;
    for (std::size_t k = 0; k < d; ++k) {
        Var acc = ad::slice(r, -1, k, 1);
        for (std::size_t j = 0; j < k; ++j) {
            Var lkj = ad::slice(head.off, -1, k * (k - 1) / 2 + j, 1);
            acc = ad::sub(acc, ad::mul(lkj, y[j]));
        }
        Var dk = ad::slice(head.diag, -1, k, 1);
        y.push_back(ad::div(acc, dk));
        quad = k == 0 ? ad::square(y.back()) : ad::add(quad, ad::square(y.back()));
        logdet = k == 0 ? ad::log(dk) : ad::add(logdet, ad::log(dk));
    }
    Var lp = ad::sub(ad::mul(quad, -0.5), logdet);
    lp = ad::add(lp, -0.5 * static_cast<double>(d) * kLog2Pi);
    ad::Shape out(s.begin(), s.end() - 1);
    return ad::reshape(lp, out);
}

Array coupling_mask(std::size_t d, std::size_t layer) {
    Array m({d});
    for (std::size_t j = 0; j < d; ++j) {
        m[j] = (j + layer) % 2 == 0 ? 1.0 : 0.0;
    }
    return m;
}

Var realnvp_fwd(Tape& t, const ParamStore& p, const NetConfig& cfg, Var z, Var ctx, Var* logdet) {
    const std::size_t d = cfg.d_space;
    if (d < 2) {
        throw std::invalid_argument("coupling flows need d >= 2");
    }
    Var x = z;
    Var total;
    for (std::size_t l = 0; l < cfg.flow_layers; ++l) {
        const Array m = coupling_mask(d, l);
        Array inv_m(m.shape());
        for (std::size_t j = 0; j < d; ++j) {
            inv_m[j] = 1.0 - m[j];
        }
        Var mv = t.constant(m);
        Var um = t.constant(inv_m);
        Var passed = ad::mul(x, mv);
        auto [s, u] = coupling_terms(t, p, l, passed, ctx, um);
        x = ad::add(passed, ad::mul(um, ad::add(ad::mul(x, ad::exp(s)), u)));
        Var ls = ad::sum(s, -1);
        total = l == 0 ? ls : ad::add(total, ls);
    }
    if (logdet != nullptr) {
        if (cfg.flow_layers == 0) {
            ad::Shape s(z.shape().begin(), z.shape().end() - 1);
            total = t.constant(Array(s));
        }
        *logdet = total;
    }
    return x;
}

Var realnvp_inv(Tape& t, const ParamStore& p, const NetConfig& cfg, Var x, Var ctx, Var* logdet) {
    const std::size_t d = cfg.d_space;
    if (d < 2) {
        throw std::invalid_argument("coupling flows need d >= 2");
    }
    Var z = x;
    Var total;
    for (std::size_t k = cfg.flow_layers; k-- > 0;) {
        const Array m = coupling_mask(d, k);
        Array inv_m(m.shape());
        for (std::size_t j = 0; j < d; ++j) {
            inv_m[j] = 1.0 - m[j];
        }
        Var mv = t.constant(m);
        Var um = t.constant(inv_m);
        Var passed = ad::mul(z, mv);
        auto [s, u] = coupling_terms(t, p, k, passed, ctx, um);
        z = ad::add(passed, ad::mul(um, ad::mul(ad::sub(z, u), ad::exp(ad::negate(s)))));
        Var ls = ad::negate(ad::sum(s, -1));
        total = k + 1 == cfg.flow_layers ? ls : ad::add(total, ls);
    }
    if (logdet != nullptr) {
        if (cfg.flow_layers == 0) {
            ad::Shape s(x.shape().begin(), x.shape().end() - 1);
            total = t.constant(Array(s));
        }
        *logdet = total;
    }
    return z;
}

Var log_prob_space(Tape& t, const ParamStore& p, const NetConfig& cfg, Var x, Var t_l, Var h_x_l) {
    const MvnHeadOut head = mvn_head(t, p, cfg, h_x_l, t_l);
    if (cfg.flow_layers == 0) {
        return mvn_logprob(head, x);
    }
    Var logdet;
    Var z = realnvp_inv(t, p, cfg, x, h_x_l, &logdet);
    return ad::add(mvn_logprob(head, z), logdet);
}

std::vector<double> mvn_sample(const std::vector<double>& mu, const std::vector<double>& diag,
                               const std::vector<double>& off, Rng& rng) {
    const std::size_t d = mu.size();
    std::vector<double> eps(d);
    for (auto& e : eps) {
        e = rng.normal();
    }
    std::vector<double> z(d);
    for (std::size_t k = 0; k < d; ++k) {
        double v = mu[k] + diag[k] * eps[k];
        for (std::size_t j = 0; j < k; ++j) {
            v += off[k * (k - 1) / 2 + j] * eps[j];
        }
        z[k] = v;
    }
    return z;
}

Array sample_space(const ParamStore& p, const NetConfig& cfg, const Array& h_x_l, const Array& t_l, Rng& rng) {
    const std::size_t d = cfg.d_space;
    if (h_x_l.rank() != 3 || h_x_l.dim(2) != d || t_l.rank() != 3 || t_l.dim(2) != 1 || h_x_l.dim(0) != t_l.dim(0) ||
        h_x_l.dim(1) != t_l.dim(1)) {
        throw std::invalid_argument("sample_space: inconsistent shapes " + ad::shape_string(h_x_l.shape()) + " and " +
                                    ad::shape_string(t_l.shape()));
    }
    Tape t;
    Var h = t.constant(h_x_l);
    const MvnHeadOut head = mvn_head(t, p, cfg, h, t.constant(t_l));
    const std::size_t rows = h_x_l.dim(0) * h_x_l.dim(1);
    const std::size_t m = d * (d - 1) / 2;
    Array z(h_x_l.shape());
    const auto& MU = head.mu.value();
    const auto& DG = head.diag.value();
    const auto& OF = head.off.value();
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> mu(MU.data() + r * d, MU.data() + (r + 1) * d);
        std::vector<double> dg(DG.data() + r * d, DG.data() + (r + 1) * d);
        std::vector<double> of(OF.data() + r * m, OF.data() + (r + 1) * m);
        const auto s = mvn_sample(mu, dg, of, rng);
        std::copy(s.begin(), s.end(), z.data() + r * d);
    }
    if (cfg.flow_layers == 0) {
        return z;
    }
    return realnvp_fwd(t, p, cfg, t.constant(z), h).value();
}

}  // namespace stpp::heads
