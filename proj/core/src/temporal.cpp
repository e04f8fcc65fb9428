#include "stpp/temporal.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace stpp::classical {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-13) {
    if (!(b > a)) {
        return 0.0;
    }
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 20, rel_tol, &error);
    if (!std::isfinite(value)) {
        throw std::runtime_error("quadrature produced a non-finite value");
    }
    if (error > 1e-6 * std::max(1.0, std::abs(value))) {
        throw std::runtime_error("quadrature did not converge (error estimate " + std::to_string(error) + ")");
    }
    return value;
}

std::size_t count_before(std::span<const double> history, double t) {
    return static_cast<std::size_t>(std::lower_bound(history.begin(), history.end(), t) - history.begin());
}

double self_correcting_rate(const TemporalModelParams& m, double t, std::size_t n_before) {
    return std::exp(m.mu + m.alpha * t - m.beta * static_cast<double>(n_before));
}

/// Integral of the self-correcting intensity over [a, b] with a fixed count.
double self_correcting_piece(const TemporalModelParams& m, double a, double b, std::size_t n_before) {
    const double left = self_correcting_rate(m, a, n_before);
    if (m.alpha == 0.0) {
        return left * (b - a);
    }
    return left * std::expm1(m.alpha * (b - a)) / m.alpha;
}

struct HawkesTerms {
    double nll{0.0};
    double d_mu{0.0};
    double d_alpha{0.0};
    double d_beta{0.0};
};

/// Hawkes NLL on [t_start, t_end] and its gradient in (mu, alpha, beta) using
/// the exponential-kernel recursions
///   R_i = e_i (R_{i-1} + 1),  S_i = e_i (S_{i-1} + delta_i (R_{i-1} + 1)),
/// with e_i = exp(-delta_i / beta), R_i = sum_{j<i} exp(-(t_i - t_j)/beta),
/// S_i = sum_{j<i} (t_i - t_j) exp(-(t_i - t_j)/beta).
HawkesTerms hawkes_terms(const TemporalModelParams& m, std::span<const double> times, double t_start,
                         double t_end, bool with_grad) {
    HawkesTerms out;
    const double mu = m.mu, alpha = m.alpha, beta = m.beta;
    double r = 0.0, s = 0.0;
    std::size_t pending = 0;  // events at the current time, not yet strictly before
    double prev = times.empty() ? 0.0 : times.front();
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] > prev) {
            const double delta = times[i] - prev;
            const double e = std::exp(-delta / beta);
            const double carried = r + static_cast<double>(pending);
            s = e * (s + delta * carried);
            r = e * carried;
            pending = 0;
            prev = times[i];
        }
        const double lam = mu + alpha / beta * r;
        if (!(lam > 0.0)) {
            throw std::domain_error("zero intensity at event index " + std::to_string(i));
        }
        out.nll -= std::log(lam);
        if (with_grad) {
            out.d_mu -= 1.0 / lam;
            out.d_alpha -= (r / beta) / lam;
            out.d_beta -= (-alpha * r / (beta * beta) + alpha * s / (beta * beta * beta)) / lam;
        }
        ++pending;
    }
    out.nll += mu * (t_end - t_start);
    if (with_grad) {
        out.d_mu += t_end - t_start;
    }
    for (double ti : times) {
        const double lo = std::max(t_start, ti);
        const double a_off = lo - ti;
        const double b_off = t_end - ti;
        if (b_off <= 0.0) {
            continue;
        }
        const double ea = std::exp(-a_off / beta);
        const double eb = std::exp(-b_off / beta);
        out.nll += alpha * (ea - eb);
        if (with_grad) {
            out.d_alpha += ea - eb;
            out.d_beta += alpha * (a_off * ea - b_off * eb) / (beta * beta);
        }
    }
    return out;
}

void check_sorted(std::span<const double> times) {
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] < times[i - 1]) {
            throw std::invalid_argument("event times must be nondecreasing");
        }
    }
}

}  // namespace

std::string to_string(TemporalKind kind) {
    switch (kind) {
        case TemporalKind::poisson:
            return "poisson";
        case TemporalKind::hawkes:
            return "hawkes";
        case TemporalKind::self_correcting:
            return "self_correcting";
    }
    return "unknown";
}

TemporalKind temporal_kind_from_string(const std::string& name) {
    if (name == "poisson" || name == "homo-poisson") {
        return TemporalKind::poisson;
    }
    if (name == "hawkes") {
        return TemporalKind::hawkes;
    }
    if (name == "self_correcting" || name == "self-correcting") {
        return TemporalKind::self_correcting;
    }
    throw std::invalid_argument("unknown temporal model kind '" + name + "'");
}

TemporalModelParams TemporalModelParams::poisson(double rate) {
    TemporalModelParams p;
    p.kind = TemporalKind::poisson;
    p.rate = rate;
    p.validate();
    return p;
}

TemporalModelParams TemporalModelParams::hawkes(double mu, double alpha, double beta) {
    TemporalModelParams p;
    p.kind = TemporalKind::hawkes;
    p.mu = mu;
    p.alpha = alpha;
    p.beta = beta;
    p.validate();
    return p;
}

TemporalModelParams TemporalModelParams::self_correcting(double mu, double alpha, double beta) {
    TemporalModelParams p;
    p.kind = TemporalKind::self_correcting;
    p.mu = mu;
    p.alpha = alpha;
    p.beta = beta;
    p.validate();
    return p;
}

void TemporalModelParams::validate() const {
    switch (kind) {
        case TemporalKind::poisson:
            if (!(rate > 0.0) || !std::isfinite(rate)) {
                throw std::invalid_argument("poisson rate must be positive and finite");
            }
            break;
        case TemporalKind::hawkes:
            if (!(mu >= 0.0) || !(alpha >= 0.0) || !(beta > 0.0) || !std::isfinite(mu) || !std::isfinite(alpha) ||
                !std::isfinite(beta)) {
                throw std::invalid_argument("hawkes requires mu >= 0, alpha >= 0, beta > 0 (finite)");
            }
            break;
        case TemporalKind::self_correcting:
            if (!(beta > 0.0) || !std::isfinite(mu) || !std::isfinite(alpha) || !std::isfinite(beta)) {
                throw std::invalid_argument("self-correcting requires finite mu, alpha and beta > 0");
            }
            break;
    }
}

bool TemporalModelParams::stationary() const {
    switch (kind) {
        case TemporalKind::poisson:
            return true;
        case TemporalKind::hawkes:
            return alpha < 1.0;
        case TemporalKind::self_correcting:
            return alpha > 0.0;
    }
    return false;
}

double intensity(const TemporalModelParams& model, double t, std::span<const double> history) {
    if (!history.empty() && t < history.back()) {
        throw std::invalid_argument("intensity queried at t precedes the end of the history");
    }
    if (!std::isfinite(t)) {
        throw std::invalid_argument("intensity queried at non-finite time");
    }
    switch (model.kind) {
        case TemporalKind::poisson:
            return model.rate;
        case TemporalKind::hawkes: {
            double acc = 0.0;
            for (double ti : history) {
                if (ti < t) {
                    acc += std::exp(-(t - ti) / model.beta);
                }
            }
            return model.mu + model.alpha / model.beta * acc;
        }
        case TemporalKind::self_correcting:
            return self_correcting_rate(model, t, count_before(history, t));
    }
    return 0.0;
}

double compensator(const TemporalModelParams& model, double a, double b, std::span<const double> history) {
    if (!(a <= b)) {
        throw std::invalid_argument("compensator requires a <= b");
    }
    switch (model.kind) {
        case TemporalKind::poisson:
            return model.rate * (b - a);
        case TemporalKind::hawkes: {
            double acc = model.mu == 0.0 ? 0.0 : model.mu * (b - a);
            for (double ti : history) {
                if (ti >= b) {
                    break;
                }
                const double lo = std::max(a, ti);
                const double eb = std::isinf(b) ? 0.0 : std::exp(-(b - ti) / model.beta);
                acc += model.alpha * (std::exp(-(lo - ti) / model.beta) - eb);
            }
            return acc;
        }
        case TemporalKind::self_correcting: {
            if (std::isinf(b)) {
                throw std::invalid_argument("self-correcting compensator needs a finite upper limit");
            }
            // On (lo, hi) with no events inside, N(u) = #{t_i <= lo}.
            const auto fired_by = [&](double u) {
                return static_cast<std::size_t>(std::upper_bound(history.begin(), history.end(), u) - history.begin());
            };
            double acc = 0.0;
            double lo = a;
            for (std::size_t i = fired_by(a); i < history.size() && history[i] < b; ++i) {
                acc += self_correcting_piece(model, lo, history[i], fired_by(lo));
                lo = history[i];
            }
            acc += self_correcting_piece(model, lo, b, fired_by(lo));
            return acc;
        }
    }
    return 0.0;
}

double nll_temporal(const TemporalModelParams& model, std::span<const double> times, double t_start, double t_end) {
    if (times.empty()) {
        throw std::invalid_argument("nll_temporal needs at least one event");
    }
    check_sorted(times);
    if (times.front() < t_start || times.back() > t_end) {
        throw std::invalid_argument("events fall outside the observation window");
    }
    switch (model.kind) {
        case TemporalKind::poisson:
            return -static_cast<double>(times.size()) * std::log(model.rate) + model.rate * (t_end - t_start);
        case TemporalKind::hawkes:
            return hawkes_terms(model, times, t_start, t_end, false).nll;
        case TemporalKind::self_correcting: {
            double nll = 0.0;
            for (std::size_t i = 0; i < times.size(); ++i) {
                const double lam = self_correcting_rate(model, times[i], count_before(times, times[i]));
                if (!(lam > 0.0)) {
                    throw std::domain_error("zero intensity at event index " + std::to_string(i));
                }
                nll -= std::log(lam);
            }
            return nll + compensator(model, t_start, t_end, times);
        }
    }
    return 0.0;
}

double nll_temporal(const TemporalModelParams& model, std::span<const double> times) {
    if (times.empty()) {
        throw std::invalid_argument("nll_temporal needs at least one event");
    }
    return nll_temporal(model, times, times.front(), times.back());
}

double next_event_logpdf(const TemporalModelParams& model, double t, std::span<const double> history) {
    const double last = history.empty() ? 0.0 : history.back();
    if (t < last) {
        throw std::invalid_argument("next event cannot precede the history");
    }
    const double lam = intensity(model, t, history);
    if (!(lam > 0.0)) {
        throw std::domain_error("zero intensity at the evaluated time");
    }
    return std::log(lam) - compensator(model, last, t, history);
}

std::vector<double> nll_gradient(const TemporalModelParams& model, const std::vector<std::vector<double>>& sequences) {
    const double inv_n = 1.0 / static_cast<double>(sequences.size());
    switch (model.kind) {
        case TemporalKind::poisson: {
            double g = 0.0;
            for (const auto& s : sequences) {
                g += -static_cast<double>(s.size()) / model.rate + (s.back() - s.front());
            }
            return {g * inv_n};
        }
        case TemporalKind::hawkes: {
            std::vector<double> g(3, 0.0);
            for (const auto& s : sequences) {
                const auto h = hawkes_terms(model, s, s.front(), s.back(), true);
                g[0] += h.d_mu;
                g[1] += h.d_alpha;
                g[2] += h.d_beta;
            }
            for (auto& v : g) {
                v *= inv_n;
            }
            return g;
        }
        case TemporalKind::self_correcting: {
            const auto f = [&](const std::vector<double>& p) {
                TemporalModelParams m = model;
                m.mu = p[0];
                m.alpha = p[1];
                m.beta = p[2];
                double acc = 0.0;
                for (const auto& s : sequences) {
                    acc += nll_temporal(m, s);
                }
                return acc * inv_n;
            };
            return numeric_gradient(f, {model.mu, model.alpha, model.beta}, 1e-6);
        }
    }
    return {};
}

FitResult fit_mle(TemporalKind kind, const std::vector<std::vector<double>>& sequences, const DescentConfig& cfg) {
    if (sequences.empty()) {
        throw std::invalid_argument("fit_mle needs a nonempty training split");
    }
    double events = 0.0, span = 0.0;
    for (const auto& s : sequences) {
        if (s.empty()) {
            throw std::invalid_argument("fit_mle received an empty sequence");
        }
        events += static_cast<double>(s.size());
        span += s.back() - s.front();
    }
    if (!(span > 0.0)) {
        throw std::invalid_argument("training sequences have zero total duration");
    }
    const double r = events / span;
    switch (kind) {
        case TemporalKind::poisson:
            return fit_mle(TemporalModelParams::poisson(r), sequences, cfg);
        case TemporalKind::hawkes:
            return fit_mle(TemporalModelParams::hawkes(0.5 * r, 0.5, 1.0 / r), sequences, cfg);
        case TemporalKind::self_correcting:
            return fit_mle(TemporalModelParams::self_correcting(std::log(r), r, 1.0), sequences, cfg);
    }
    throw std::invalid_argument("unknown temporal kind");
}

FitResult fit_mle(const TemporalModelParams& init, const std::vector<std::vector<double>>& sequences,
                  const DescentConfig& cfg) {
    if (sequences.empty()) {
        throw std::invalid_argument("fit_mle needs a nonempty training split");
    }
    init.validate();
    const double inv_n = 1.0 / static_cast<double>(sequences.size());
    const auto mean_nll = [&](const TemporalModelParams& m) {
        double acc = 0.0;
        for (const auto& s : sequences) {
            acc += nll_temporal(m, s);
        }
        return acc * inv_n;
    };

    // Unconstrained coordinates: poisson (log rate); hawkes (log mu, alpha, log beta)
    // with alpha projected onto [0, inf); self-correcting (mu, alpha, log beta).
    const auto decode = [&](const std::vector<double>& x) {
        TemporalModelParams m = init;
        switch (init.kind) {
            case TemporalKind::poisson:
                m.rate = std::exp(x[0]);
                break;
            case TemporalKind::hawkes:
                m.mu = std::exp(x[0]);
                m.alpha = x[1];
                m.beta = std::exp(x[2]);
                break;
            case TemporalKind::self_correcting:
                m.mu = x[0];
                m.alpha = x[1];
                m.beta = std::exp(x[2]);
                break;
        }
        return m;
    };
    std::vector<double> x0;
    std::vector<std::optional<double>> lower;
    switch (init.kind) {
        case TemporalKind::poisson:
            x0 = {std::log(init.rate)};
            lower = {std::nullopt};
            break;
        case TemporalKind::hawkes:
            x0 = {std::log(std::max(init.mu, 1e-300)), init.alpha, std::log(init.beta)};
            lower = {std::nullopt, 0.0, std::nullopt};
            break;
        case TemporalKind::self_correcting:
            x0 = {init.mu, init.alpha, std::log(init.beta)};
            lower = {std::nullopt, std::nullopt, std::nullopt};
            break;
    }

    const Objective objective = [&](const std::vector<double>& x, std::vector<double>* grad) {
        const TemporalModelParams m = decode(x);
        double f = 0.0;
        try {
            f = mean_nll(m);
        } catch (const std::domain_error&) {
            return kInf;
        } catch (const std::runtime_error&) {
            return kInf;
        }
        if (grad != nullptr) {
            const auto g = nll_gradient(m, sequences);
            switch (init.kind) {
                case TemporalKind::poisson:
                    *grad = {g[0] * m.rate};
                    break;
                case TemporalKind::hawkes:
                    *grad = {g[0] * m.mu, g[1], g[2] * m.beta};
                    break;
                case TemporalKind::self_correcting:
                    *grad = {g[0], g[1], g[2] * m.beta};
                    break;
            }
        }
        return f;
    };

    const auto res = minimize(objective, x0, lower, cfg);
    if (std::isnan(res.f)) {
        throw std::runtime_error("MLE diverged (NLL is NaN)");
    }
    return FitResult{decode(res.x), res.f, res.iters, res.converged};
}

double expected_next_time(const TemporalModelParams& model, std::span<const double> history, const MomentConfig& cfg) {
    if (history.empty()) {
        throw std::invalid_argument("expected_next_time needs a nonempty history");
    }
    const double tn = history.back();
    const double lam0 = intensity(model, std::nextafter(tn, kInf), history);
    const double scale = (lam0 > 0.0 && std::isfinite(lam0)) ? 1.0 / lam0 : 1.0;
    const double target = -std::log(cfg.survival_cutoff);

    double h = scale;
    while (compensator(model, tn, tn + h, history) < target) {
        h *= 2.0;
        if (h > cfg.max_horizon_factor * scale || !std::isfinite(h)) {
            throw std::domain_error("defective next-event distribution: survival does not vanish");
        }
    }
    const double end = tn + h;

    // int t lambda S dt = tn (1 - S(end)) + int (t - tn) lambda S dt
    const auto integrand = [&](double t) {
        const double lam = intensity(model, t, history);
        return (t - tn) * lam * std::exp(-compensator(model, tn, t, history));
    };
    // Panels concentrate nodes near tn where most of the mass sits.
    double acc = 0.0;
    double lo = tn;
    for (double w = scale / 8.0; lo < end; w *= 2.0) {
        const double hi = std::min(end, lo + w);
        acc += integrate(integrand, lo, hi, cfg.rel_tol);
        lo = hi;
    }
    const double survival_end = std::exp(-compensator(model, tn, end, history));
    return tn * (1.0 - survival_end) + acc;
}

std::vector<double> sequential_predict(const TemporalModelParams& model, std::vector<double> history,
                                       std::size_t steps, const MomentConfig& cfg) {
    if (steps == 0) {
        throw std::invalid_argument("sequential_predict needs at least one step");
    }
    std::vector<double> out;
    out.reserve(steps);
    for (std::size_t l = 0; l < steps; ++l) {
        const double t_hat = expected_next_time(model, history, cfg);
        out.push_back(t_hat);
        history.push_back(t_hat);
    }
    return out;
}

IntensityTracker::IntensityTracker(TemporalModelParams model) : model_(model) {
    model_.validate();
}

double IntensityTracker::at(double t) const {
    if (count_ > 0 && t < last_) {
        throw std::invalid_argument("IntensityTracker queried before the last event");
    }
    switch (model_.kind) {
        case TemporalKind::poisson:
            return model_.rate;
        case TemporalKind::hawkes: {
            if (count_ == 0) {
                return model_.mu;
            }
            // Events at exactly t do not contribute (strict t_i < t).
            const double ex = t > last_ ? excitation_ * std::exp(-(t - last_) / model_.beta) : excitation_ - 1.0;
            return model_.mu + model_.alpha / model_.beta * ex;
        }
        case TemporalKind::self_correcting: {
            const std::size_t n = (count_ > 0 && t <= last_) ? count_ - 1 : count_;
            return self_correcting_rate(model_, t, n);
        }
    }
    return 0.0;
}

double IntensityTracker::right_limit() const {
    switch (model_.kind) {
        case TemporalKind::poisson:
            return model_.rate;
        case TemporalKind::hawkes:
            return model_.mu + model_.alpha / model_.beta * excitation_;
        case TemporalKind::self_correcting:
            return self_correcting_rate(model_, last_, count_);
    }
    return 0.0;
}

void IntensityTracker::add_event(double t) {
    if (count_ > 0 && t < last_) {
        throw std::invalid_argument("events must be added in time order");
    }
    if (model_.kind == TemporalKind::hawkes) {
        excitation_ = (count_ == 0 ? 0.0 : excitation_ * std::exp(-(t - last_) / model_.beta)) + 1.0;
    }
    last_ = t;
    ++count_;
}

}  // namespace stpp::classical
