#include "stpp/train.hpp"

#include "stpp/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace stpp::train {

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::none:
            return "none";
        case Ablation::zero_encoder:
            return "zero-encoder";
        case Ablation::zero_decoder:
            return "zero-decoder";
    }
    return "none";
}

Ablation ablation_from_string(const std::string& name) {
    if (name == "none") {
        return Ablation::none;
    }
    if (name == "zero-encoder" || name == "zero_encoder") {
        return Ablation::zero_encoder;
    }
    if (name == "zero-decoder" || name == "zero_decoder") {
        return Ablation::zero_decoder;
    }
    throw std::invalid_argument("unknown ablation '" + name + "' (expected none, zero-encoder or zero-decoder)");
}

std::string to_string(TimeSource s) {
    return s == TimeSource::true_times ? "true" : "sampled";
}

TimeSource time_source_from_string(const std::string& name) {
    if (name == "true" || name == "true_times" || name == "true-times") {
        return TimeSource::true_times;
    }
    if (name == "sampled") {
        return TimeSource::sampled;
    }
    throw std::invalid_argument("unknown time source '" + name + "' (expected true or sampled)");
}

void TrainConfig::validate() const {
    std::vector<std::string> errors;
    if (batch_size == 0) {
        errors.emplace_back("batch_size must be positive");
    }
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) {
        errors.emplace_back("lr0 must be positive");
    }
    if (!(schedule.factor > 0.0 && schedule.factor <= 1.0)) {
        errors.emplace_back("schedule factor must be in (0, 1]");
    }
    if (schedule.patience == 0) {
        errors.emplace_back("schedule patience must be positive");
    }
    if (!(schedule.min_lr > 0.0)) {
        errors.emplace_back("schedule min_lr must be positive");
    }
    if (clip_norm < 0.0) {
        errors.emplace_back("clip_norm must be nonnegative");
    }
    if (!errors.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& e : errors) {
            msg += "\n  - " + e;
        }
        throw std::invalid_argument(msg);
    }
}

Model init_model(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m{cfg, {}};
    Rng rng(seed, 1);
    neural::init_network_params(m.params, cfg, rng);
    heads::init_head_params(m.params, cfg, rng);
    return m;
}

namespace {

double clamp_interval(double v, neural::TimeFlow flow) {
    const double upper = flow == neural::TimeFlow::softsign ? 1.0 - kIntervalEps : std::numeric_limits<double>::max();
    return std::clamp(v, kIntervalEps, upper);
}

void put_event(double* dst, const EventSequence& s, std::size_t i) {
    dst[0] = s.dt[i];
    const auto& e = s.events[i];
    std::copy(e.x.begin(), e.x.end(), dst + 1);
    dst[1 + e.x.size()] = e.m;
}

}  // namespace

Batch make_batch(std::span<const EventSequence> seqs, std::span<const std::size_t> index, const NetConfig& cfg,
                 Ablation ablation, bool teacher) {
    const std::size_t b = index.size();
    const std::size_t n = cfg.n_in;
    const std::size_t l = cfg.l_out;
    const std::size_t d = cfg.d_space;
    const std::size_t f = cfg.features();
    if (b == 0) {
        throw std::invalid_argument("empty batch");
    }
    Batch batch{Array({b, n, f}), Array({b, l, f}), Array({b, l}), Array({b, l, d})};
    for (std::size_t r = 0; r < b; ++r) {
        const auto& s = seqs[index[r]];
        if (!s.normalized) {
            throw std::invalid_argument("sequence " + std::to_string(index[r]) + " is not normalized");
        }
        if (s.size() != n + l || s.n_in != n || s.l_out != l) {
            throw std::invalid_argument("sequence " + std::to_string(index[r]) + " has shape (" +
                                        std::to_string(s.n_in) + " + " + std::to_string(s.l_out) +
                                        ") but the network expects (" + std::to_string(n) + " + " +
                                        std::to_string(l) + ")");
        }
        if (s.events.front().x.size() != d) {
            throw std::invalid_argument("sequence dimension does not match the network");
        }
        if (ablation != Ablation::zero_encoder) {
            for (std::size_t i = 0; i < n; ++i) {
                put_event(batch.enc_in.data() + (r * n + i) * f, s, i);
            }
        }
        if (teacher && ablation != Ablation::zero_decoder) {
            for (std::size_t k = 1; k < l; ++k) {
                put_event(batch.dec_in.data() + (r * l + k) * f, s, n + k - 1);
            }
        }
        for (std::size_t k = 0; k < l; ++k) {
            batch.t_target[r * l + k] = clamp_interval(s.dt[n + k], cfg.time_flow);
            const auto& x = s.events[n + k].x;
            std::copy(x.begin(), x.end(), batch.x_target.data() + (r * l + k) * d);
        }
    }
    return batch;
}

Batch make_batch(std::span<const EventSequence> seqs, const NetConfig& cfg, Ablation ablation, bool teacher) {
    std::vector<std::size_t> idx(seqs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return make_batch(seqs, idx, cfg, ablation, teacher);
}

ForwardOut forward(Tape& tape, const Model& model, const Batch& batch, const neural::Mode& mode) {
    ForwardOut out;
    out.encoded = neural::encoder_forward(tape, model.params, model.cfg, batch.enc_in, mode);
    out.decoded = neural::decoder_forward(tape, model.params, model.cfg, batch.dec_in, out.encoded, mode);
    out.beta = heads::exp_head(tape, model.params, out.decoded.h_t_l);
    return out;
}

BatchLogProbs log_probs(Tape& tape, const Model& model, const Batch& batch, const ForwardOut& fwd,
                        const Array& t_input) {
    const std::size_t b = batch.t_target.dim(0);
    const std::size_t l = batch.t_target.dim(1);
    BatchLogProbs lp;
    lp.time = heads::log_prob_time(fwd.beta, batch.t_target, model.cfg.time_flow);
    Var t_l = tape.constant(t_input.reshaped({b, l, 1}));
    lp.space = heads::log_prob_space(tape, model.params, model.cfg, tape.constant(batch.x_target), t_l,
                                     fwd.decoded.h_x_l);
    return lp;
}

Var loss_multi_event(Tape& tape, const Model& model, const Batch& batch, const neural::Mode& mode) {
    const ForwardOut fwd = forward(tape, model, batch, mode);
    const BatchLogProbs lp = log_probs(tape, model, batch, fwd, batch.t_target);
    const double b = static_cast<double>(batch.t_target.dim(0));
    Var total = ad::add(ad::sum(lp.time), ad::sum(lp.space));
    Var loss = ad::mul(total, -1.0 / b);
    if (!std::isfinite(loss.value().item())) {
        const auto& t = lp.time.value();
        const auto& s = lp.space.value();
        const std::size_t l = batch.t_target.dim(1);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!std::isfinite(t[i]) || !std::isfinite(s[i])) {
                throw std::runtime_error("non-finite loss at batch sequence " + std::to_string(i / l) + ", slot " +
                                         std::to_string(i % l));
            }
        }
        throw std::runtime_error("non-finite loss");
    }
    return loss;
}

double eval_loss(const Model& model, std::span<const EventSequence> seqs, Ablation ablation,
                 std::size_t batch_size) {
    if (seqs.empty()) {
        throw std::invalid_argument("evaluation split is empty");
    }
    double acc = 0.0;
    for (std::size_t start = 0; start < seqs.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, seqs.size() - start);
        const Batch batch = make_batch(seqs.subspan(start, len), model.cfg, ablation, false);
        Tape tape;
        acc += loss_multi_event(tape, model, batch, {}).value().item() * static_cast<double>(len);
    }
    return acc / static_cast<double>(seqs.size());
}

void Adam::step(ParamStore& params, const std::map<std::string, Array>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params.items()) {
        if (!p.trainable) {
            continue;
        }
        auto git = grads.find(p.name);
        if (git == grads.end()) {
            continue;
        }
        const Array& g = git->second;
        auto [mit, m_new] = m_.try_emplace(p.name, p.value.shape());
        auto [vit, v_new] = v_.try_emplace(p.name, p.value.shape());
        Array& m = mit->second;
        Array& v = vit->second;
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write training log: " + path.string());
    }
    out << "epoch,train_loss,val_loss,lr\n" << std::setprecision(17);
    for (const auto& h : history) {
        out << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << h.lr << '\n';
    }
}

TrainResult train(Model& model, const std::vector<EventSequence>& train_split,
                  const std::vector<EventSequence>& val_split, const TrainConfig& cfg) {
    cfg.validate();
    if (train_split.empty() || val_split.empty()) {
        throw std::invalid_argument("training needs nonempty train and validation splits");
    }
    Rng dropout_rng(cfg.seed, 2);
    Rng shuffle_rng(cfg.seed, 3);
    Adam adam;
    double lr = cfg.lr0;

    const auto checkpoint = [&]() {
        if (cfg.checkpoint_path) {
            nlohmann::json meta = cfg.checkpoint_meta;
            meta["net"] = neural::to_json(model.cfg);
            ad::save_checkpoint(*cfg.checkpoint_path, model.params, meta);
        }
    };

    TrainResult res;
    const double val0 = eval_loss(model, val_split, cfg.ablation);
    const double train0 = eval_loss(model, train_split, cfg.ablation);
    res.history.push_back({0, train0, val0, lr});
    res.best_val = val0;
    ParamStore best = model.params;
    checkpoint();
    if (cfg.log_path) {
        write_log_csv(*cfg.log_path, res.history);
    }
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train_split.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        double acc = 0.0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t len = std::min(cfg.batch_size, order.size() - start);
                const Batch batch = make_batch(train_split, std::span<const std::size_t>(order).subspan(start, len),
                                               model.cfg, cfg.ablation, true);
                Tape tape;
                const Var loss = loss_multi_event(tape, model, batch, {true, &dropout_rng});
                auto grads = model.params.complete(tape.backward(loss));
                if (cfg.clip_norm > 0.0) {
                    double sq = 0.0;
                    for (const auto& [name, g] : grads) {
                        for (double v : g.values()) {
                            sq += v * v;
                        }
                    }
                    const double norm = std::sqrt(sq);
                    if (norm > cfg.clip_norm) {
                        for (auto& [name, g] : grads) {
                            for (auto& v : g.values()) {
                                v *= cfg.clip_norm / norm;
                            }
                        }
                    }
                }
                adam.step(model.params, grads, lr);
                acc += loss.value().item() * static_cast<double>(len);
            }
        } catch (const std::runtime_error& e) {
            res.aborted = true;
            res.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        } catch (const std::domain_error& e) {
            res.aborted = true;
            res.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
            break;
        }
        const double train_loss = acc / static_cast<double>(train_split.size());
        double val = std::numeric_limits<double>::quiet_NaN();
        try {
            val = eval_loss(model, val_split, cfg.ablation);
        } catch (const std::exception& e) {
            res.aborted = true;
            res.abort_reason = "epoch " + std::to_string(epoch) + " validation: " + e.what();
            break;
        }
        res.history.push_back({epoch, train_loss, val, lr});
        if (val < res.best_val) {
            res.best_val = val;
            res.best_epoch = epoch;
            best = model.params;
            since_best = 0;
            checkpoint();
        } else if (++since_best >= cfg.schedule.patience) {
            lr = std::max(lr * cfg.schedule.factor, cfg.schedule.min_lr);
            since_best = 0;
        }
        if (cfg.log_path) {
            write_log_csv(*cfg.log_path, res.history);
        }
        if (cfg.verbose) {
            std::cerr << "epoch " << epoch << " train " << train_loss << " val " << val << " lr " << lr << '\n';
        }
    }
    model.params = best;
    if (cfg.log_path) {
        write_log_csv(*cfg.log_path, res.history);
    }
    return res;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("mean of no values");
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

namespace {

/// Mean of `samples` draws of the flowed time distribution with scale beta.
double mean_time_sample(double beta, neural::TimeFlow flow, std::size_t samples, Rng& rng,
                        std::vector<double>* draws = nullptr) {
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        double z = heads::exp_sample(beta, rng);
        z = std::max(z, std::numeric_limits<double>::min());
        const double t = heads::time_flow_fwd(flow, z);
        if (draws != nullptr) {
            draws->push_back(t);
        }
        acc += t;
    }
    return acc / static_cast<double>(samples);
}

/// A copy of `seq` padded with placeholder outputs when it carries only the
/// history.
EventSequence with_outputs(const EventSequence& seq, const NetConfig& cfg, bool& has_targets) {
    has_targets = seq.size() == cfg.n_in + cfg.l_out;
    if (has_targets) {
        return seq;
    }
    if (seq.size() != cfg.n_in) {
        throw std::invalid_argument("sequence has " + std::to_string(seq.size()) + " events; expected " +
                                    std::to_string(cfg.n_in) + " history events (optionally followed by " +
                                    std::to_string(cfg.l_out) + " outputs)");
    }
    EventSequence padded = seq;
    for (std::size_t k = 0; k < cfg.l_out; ++k) {
        padded.events.push_back(events::Event{seq.events.back().t, std::vector<double>(cfg.d_space, 0.0), 0.0});
        padded.dt.push_back(0.5);
    }
    padded.l_out = cfg.l_out;
    return padded;
}

struct SingleForward {
    Batch batch;
    std::vector<double> beta;   // L
    std::vector<double> h_x_l;  // L * d
};

SingleForward forward_single(const Model& model, const EventSequence& seq, Ablation ablation) {
    SingleForward out;
    out.batch = make_batch(std::span<const EventSequence>(&seq, 1), model.cfg, ablation, false);
    Tape tape;
    const ForwardOut fwd = forward(tape, model, out.batch, {});
    out.beta = fwd.beta.value().values();
    out.h_x_l = fwd.decoded.h_x_l.value().values();
    return out;
}

/// log p (normalized units) of many points for one slot, given h_x_l row and t input.
std::vector<double> slot_logprob(const Model& model, const double* h_row, double t_input,
                                 const std::vector<std::vector<double>>& points_norm) {
    const std::size_t d = model.cfg.d_space;
    const std::size_t g = points_norm.size();
    std::vector<double> out;
    out.reserve(g);
    const std::size_t chunk = 4096;
    for (std::size_t start = 0; start < g; start += chunk) {
        const std::size_t len = std::min(chunk, g - start);
        Array h({len, 1, d}), x({len, 1, d}), t({len, 1, 1}, t_input);
        for (std::size_t i = 0; i < len; ++i) {
            std::copy(h_row, h_row + d, h.data() + i * d);
            std::copy(points_norm[start + i].begin(), points_norm[start + i].end(), x.data() + i * d);
        }
        Tape tape;
        const Var lp =
            heads::log_prob_space(tape, model.params, model.cfg, tape.constant(x), tape.constant(t), tape.constant(h));
        out.insert(out.end(), lp.value().values().begin(), lp.value().values().end());
    }
    return out;
}

double log_jacobian(const NormStats& stats) {
    double acc = 0.0;
    for (double v : stats.space_var) {
        acc += 0.5 * std::log(v);
    }
    return acc;
}

}  // namespace

EvalResult evaluate(const Model& model, std::span<const EventSequence> split, const EvalConfig& cfg) {
    if (split.empty()) {
        throw std::invalid_argument("evaluation split is empty");
    }
    Rng rng(cfg.seed, 4);
    EvalResult res;
    const std::size_t l = model.cfg.l_out;
    for (std::size_t start = 0; start < split.size(); start += cfg.batch_size) {
        const std::size_t len = std::min(cfg.batch_size, split.size() - start);
        const Batch batch = make_batch(split.subspan(start, len), model.cfg, cfg.ablation, false);
        Tape tape;
        const ForwardOut fwd = forward(tape, model, batch, {});
        Array t_input = batch.t_target;
        if (cfg.time_source == TimeSource::sampled) {
            const auto& beta = fwd.beta.value();
            for (std::size_t i = 0; i < beta.size(); ++i) {
                t_input[i] = clamp_interval(mean_time_sample(beta[i], model.cfg.time_flow, cfg.samples, rng),
                                            model.cfg.time_flow);
            }
        }
        const BatchLogProbs lp = log_probs(tape, model, batch, fwd, t_input);
        for (std::size_t r = 0; r < len; ++r) {
            double nt = 0.0, ns = 0.0;
            for (std::size_t k = 0; k < l; ++k) {
                nt -= lp.time.value()[r * l + k];
                ns -= lp.space.value()[r * l + k];
            }
            res.per_sequence_time.push_back(nt);
            res.per_sequence_space.push_back(ns);
        }
    }
    std::vector<double> joint(res.per_sequence_time.size());
    for (std::size_t i = 0; i < joint.size(); ++i) {
        joint[i] = res.per_sequence_time[i] + res.per_sequence_space[i];
    }
    res.time = mean_std(res.per_sequence_time);
    res.space = mean_std(res.per_sequence_space);
    res.joint = mean_std(joint);
    return res;
}

Prediction predict(const Model& model, const EventSequence& seq_in, const NormStats& stats, const EvalConfig& cfg) {
    bool has_targets = false;
    const EventSequence seq = with_outputs(seq_in, model.cfg, has_targets);
    if (!has_targets && cfg.time_source == TimeSource::true_times) {
        throw std::invalid_argument("true-time spatial prediction needs the true output times");
    }
    if (cfg.samples == 0) {
        throw std::invalid_argument("prediction needs at least one sample");
    }
    const std::size_t n = model.cfg.n_in;
    const std::size_t l = model.cfg.l_out;
    const std::size_t d = model.cfg.d_space;
    const SingleForward fwd = forward_single(model, seq, cfg.ablation);
    Rng rng(cfg.seed, 4);

    Prediction p;
    p.beta = fwd.beta;
    const auto raw = events::denormalize_sequence(seq, stats);
    double t_prev = raw.events[n - 1].t;
    std::vector<std::vector<double>> draws(l);
    for (std::size_t k = 0; k < l; ++k) {
        const double m = mean_time_sample(fwd.beta[k], model.cfg.time_flow, cfg.samples, rng, &draws[k]);
        p.dt_hat_norm.push_back(m);
        t_prev += events::denormalize_interval(m, stats);
        p.t_hat.push_back(t_prev);
    }
    for (std::size_t k = 0; k < l; ++k) {
        Array h({cfg.samples, 1, d}), t({cfg.samples, 1, 1});
        for (std::size_t s = 0; s < cfg.samples; ++s) {
            std::copy(fwd.h_x_l.begin() + static_cast<std::ptrdiff_t>(k * d),
                      fwd.h_x_l.begin() + static_cast<std::ptrdiff_t>((k + 1) * d), h.data() + s * d);
            t[s] = cfg.time_source == TimeSource::true_times ? fwd.batch.t_target[k]
                                                              : clamp_interval(draws[k][s], model.cfg.time_flow);
        }
        const Array xs = heads::sample_space(model.params, model.cfg, h, t, rng);
        std::vector<double> mean(d, 0.0);
        for (std::size_t s = 0; s < cfg.samples; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                mean[j] += xs[s * d + j] / static_cast<double>(cfg.samples);
            }
        }
        p.x_hat.push_back(events::denormalize_location(mean, stats));
    }
    if (has_targets) {
        Tape tape;
        const ForwardOut f = forward(tape, model, fwd.batch, {});
        Array t_input = fwd.batch.t_target;
        if (cfg.time_source == TimeSource::sampled) {
            for (std::size_t k = 0; k < l; ++k) {
                t_input[k] = clamp_interval(p.dt_hat_norm[k], model.cfg.time_flow);
            }
        }
        const BatchLogProbs lp = log_probs(tape, model, fwd.batch, f, t_input);
        for (std::size_t k = 0; k < l; ++k) {
            p.nll_time.push_back(-lp.time.value()[k]);
            p.nll_space.push_back(-lp.space.value()[k]);
        }
    }
    return p;
}

nlohmann::json to_json(const Prediction& p) {
    nlohmann::json j;
    j["t_hat"] = p.t_hat;
    j["x_hat"] = p.x_hat;
    j["dt_hat_normalized"] = p.dt_hat_norm;
    j["beta"] = p.beta;
    if (!p.nll_time.empty()) {
        double nt = 0.0, ns = 0.0;
        for (double v : p.nll_time) {
            nt += v;
        }
        for (double v : p.nll_space) {
            ns += v;
        }
        j["nll"] = {{"time", nt}, {"space", ns}, {"joint", nt + ns}, {"time_per_slot", p.nll_time},
                    {"space_per_slot", p.nll_space}};
    } else {
        j["nll"] = nullptr;
    }
    return j;
}

std::vector<double> space_logprob_points(const Model& model, const EventSequence& seq_in, const NormStats& stats,
                                         std::size_t slot, const std::vector<std::vector<double>>& points,
                                         double t_input) {
    if (slot >= model.cfg.l_out) {
        throw std::out_of_range("output slot " + std::to_string(slot) + " out of range");
    }
    bool has_targets = false;
    const EventSequence seq = with_outputs(seq_in, model.cfg, has_targets);
    const SingleForward fwd = forward_single(model, seq, Ablation::none);
    std::vector<std::vector<double>> norm;
    norm.reserve(points.size());
    for (const auto& x : points) {
        norm.push_back(events::normalize_location(x, stats));
    }
    auto lp = slot_logprob(model, fwd.h_x_l.data() + slot * model.cfg.d_space, t_input, norm);
    const double jac = log_jacobian(stats);
    for (auto& v : lp) {
        v -= jac;
    }
    return lp;
}

nlohmann::json export_density(const Model& model, const EventSequence& seq_in, const NormStats& stats,
                              const GridConfig& cfg) {
    if (cfg.steps < 2) {
        throw std::invalid_argument("grid needs at least 2 steps per axis");
    }
    if (cfg.steps * cfg.steps > cfg.max_cells) {
        throw std::invalid_argument("grid of " + std::to_string(cfg.steps * cfg.steps) + " cells exceeds the cap of " +
                                    std::to_string(cfg.max_cells));
    }
    bool has_targets = false;
    const EventSequence seq = with_outputs(seq_in, model.cfg, has_targets);
    if (!has_targets && cfg.time_source == TimeSource::true_times) {
        throw std::invalid_argument("true-time density export needs the true output times");
    }
    const std::size_t n = model.cfg.n_in;
    const std::size_t l = model.cfg.l_out;
    const std::size_t d = model.cfg.d_space;
    const SingleForward fwd = forward_single(model, seq, Ablation::none);
    Rng rng(cfg.seed, 5);
    const auto raw = events::denormalize_sequence(seq, stats);

    std::vector<double> t_in(l);
    for (std::size_t k = 0; k < l; ++k) {
        t_in[k] = cfg.time_source == TimeSource::true_times
                      ? fwd.batch.t_target[k]
                      : clamp_interval(mean_time_sample(fwd.beta[k], model.cfg.time_flow, 1000, rng),
                                       model.cfg.time_flow);
    }

    double depth = 0.0;
    if (d == 3) {
        if (cfg.depth) {
            depth = *cfg.depth;
        } else if (has_targets) {
            depth = raw.events[n].x[2];
        } else {
            depth = stats.space_mean[2];
        }
    }

    std::array<double, 4> bounds{};
    if (cfg.bounds) {
        bounds = *cfg.bounds;
    } else {
        // Window of +-sigmas sample standard deviations around the pooled samples.
        double s1 = 0.0, s2 = 0.0, q1 = 0.0, q2 = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < l; ++k) {
            Array h({cfg.samples, 1, d}), t({cfg.samples, 1, 1}, t_in[k]);
            for (std::size_t s = 0; s < cfg.samples; ++s) {
                std::copy_n(fwd.h_x_l.data() + k * d, d, h.data() + s * d);
            }
            const Array xs = heads::sample_space(model.params, model.cfg, h, t, rng);
            for (std::size_t s = 0; s < cfg.samples; ++s) {
                const auto x = events::denormalize_location({xs.data() + s * d, xs.data() + (s + 1) * d}, stats);
                s1 += x[0];
                s2 += x[1];
                q1 += x[0] * x[0];
                q2 += x[1] * x[1];
                ++count;
            }
        }
        const double c = static_cast<double>(count);
        const double m1 = s1 / c, m2 = s2 / c;
        const double sd1 = std::sqrt(std::max(q1 / c - m1 * m1, 1e-12));
        const double sd2 = std::sqrt(std::max(q2 / c - m2 * m2, 1e-12));
        bounds = {m1 - cfg.sigmas * sd1, m1 + cfg.sigmas * sd1, m2 - cfg.sigmas * sd2, m2 + cfg.sigmas * sd2};
    }
    if (!(bounds[1] > bounds[0]) || !(bounds[3] > bounds[2])) {
        throw std::invalid_argument("grid bounds must have positive extent");
    }

    const std::size_t ns = cfg.steps;
    std::vector<std::vector<double>> points;
    points.reserve(ns * ns);
    const double dx1 = (bounds[1] - bounds[0]) / static_cast<double>(ns - 1);
    const double dx2 = (bounds[3] - bounds[2]) / static_cast<double>(ns - 1);
    for (std::size_t j = 0; j < ns; ++j) {
        for (std::size_t i = 0; i < ns; ++i) {
            std::vector<double> x{bounds[0] + dx1 * static_cast<double>(i), bounds[2] + dx2 * static_cast<double>(j)};
            if (d == 3) {
                x.push_back(depth);
            }
            points.push_back(events::normalize_location(x, stats));
        }
    }

    nlohmann::json out;
    out["schema_version"] = 1;
    out["grid"] = {{"x1_min", bounds[0]},
                   {"x1_max", bounds[1]},
                   {"x2_min", bounds[2]},
                   {"x2_max", bounds[3]},
                   {"steps", {ns, ns}},
                   {"layout", "row-major: x2 outer, x1 inner"},
                   {"cell_area", dx1 * dx2}};
    if (d == 3) {
        out["grid"]["depth"] = depth;
    }
    const double jac = log_jacobian(stats);
    std::vector<std::vector<double>> dens;
    out["slots"] = nlohmann::json::array();
    for (std::size_t k = 0; k < l; ++k) {
        auto lp = slot_logprob(model, fwd.h_x_l.data() + k * d, t_in[k], points);
        std::vector<double> p(lp.size());
        for (std::size_t i = 0; i < lp.size(); ++i) {
            lp[i] -= jac;
            p[i] = std::exp(lp[i]);
        }
        nlohmann::json slot = {{"event_index", n + k}, {"slot", k}, {"t_input", t_in[k]}, {"logp", lp}};
        if (has_targets) {
            slot["truth"] = raw.events[n + k].x;
        }
        out["slots"].push_back(std::move(slot));
        dens.push_back(std::move(p));
    }
    out["differences"] = nlohmann::json::array();
    if (cfg.differences) {
        for (std::size_t k = 1; k < l; ++k) {
            std::vector<double> diff(dens[k].size());
            for (std::size_t i = 0; i < diff.size(); ++i) {
                diff[i] = dens[k][i] - dens[k - 1][i];
            }
            out["differences"].push_back({{"from_event", n + k - 1}, {"to_event", n + k}, {"values", diff}});
        }
    }
    nlohmann::json history = nlohmann::json::array();
    for (std::size_t i = n > 50 ? n - 50 : 0; i < n; ++i) {
        history.push_back(raw.events[i].x);
    }
    out["history"] = std::move(history);
    out["meta"] = {{"d", d}, {"time_source", to_string(cfg.time_source)}, {"units", "original"}};
    return out;
}

nlohmann::json to_json(const NormStats& s) {
    return {{"space_mean", s.space_mean},
            {"space_var", s.space_var},
            {"marker_mean", s.marker_mean},
            {"marker_var", s.marker_var},
            {"dt_max", s.dt_max}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
    NormStats s;
    s.space_mean = j.at("space_mean").get<std::vector<double>>();
    s.space_var = j.at("space_var").get<std::vector<double>>();
    s.marker_mean = j.at("marker_mean").get<double>();
    s.marker_var = j.at("marker_var").get<double>();
    s.dt_max = j.at("dt_max").get<double>();
    return s;
}

void save_model(const std::filesystem::path& path, const Model& model, const NormStats& stats,
                const nlohmann::json& extra) {
    nlohmann::json meta = extra;
    meta["net"] = neural::to_json(model.cfg);
    meta["stats"] = to_json(stats);
    ad::save_checkpoint(path, model.params, meta);
}

LoadedModel load_model(const std::filesystem::path& path) {
    auto ck = ad::load_checkpoint(path);
    if (!ck.meta.contains("net") || !ck.meta.contains("stats")) {
        throw std::runtime_error("checkpoint lacks network config or normalization stats: " + path.string());
    }
    LoadedModel out;
    out.model.cfg = neural::net_config_from_json(ck.meta.at("net"));
    out.model.params = std::move(ck.params);
    out.stats = norm_stats_from_json(ck.meta.at("stats"));
    out.meta = std::move(ck.meta);
    return out;
}

}  // namespace stpp::train
