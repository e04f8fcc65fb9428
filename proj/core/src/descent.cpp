#include "stpp/descent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stpp::classical {

namespace {

void project(std::vector<double>& x, const std::vector<std::optional<double>>& lower) {
    for (std::size_t i = 0; i < x.size() && i < lower.size(); ++i) {
        if (lower[i] && x[i] < *lower[i]) {
            x[i] = *lower[i];
        }
    }
}

double projected_grad_norm(const std::vector<double>& x,
                           const std::vector<double>& g,
                           const std::vector<std::optional<double>>& lower) {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double gi = g[i];
        if (i < lower.size() && lower[i] && x[i] <= *lower[i] && gi > 0.0) {
            gi = 0.0;  // pushing against an active bound
        }
        norm = std::max(norm, std::abs(gi));
    }
    return norm;
}

}  // namespace

DescentResult minimize(const Objective& f,
                       std::vector<double> x0,
                       const std::vector<std::optional<double>>& lower,
                       const DescentConfig& cfg) {
    project(x0, lower);
    const std::size_t n = x0.size();
    DescentResult res;
    res.x = std::move(x0);
    std::vector<double> g(n);
    res.f = f(res.x, &g);
    if (!std::isfinite(res.f)) {
        throw std::runtime_error("objective is not finite at the initial point");
    }
    double step = cfg.initial_step;
    std::vector<double> x_new(n), g_new(n);
    for (res.iters = 0; res.iters < cfg.max_iters; ++res.iters) {
        res.grad_norm = projected_grad_norm(res.x, g, lower);
        if (res.grad_norm <= cfg.grad_tol * std::max(1.0, std::abs(res.f))) {
            res.converged = true;
            break;
        }
        double t = step;
        double f_new = 0.0;
        bool accepted = false;
        for (std::size_t bt = 0; bt <= cfg.max_backtracks; ++bt) {
            for (std::size_t i = 0; i < n; ++i) {
                x_new[i] = res.x[i] - t * g[i];
            }
            project(x_new, lower);
            double decrease = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                decrease += g[i] * (res.x[i] - x_new[i]);
            }
            f_new = f(x_new, &g_new);
            if (std::isnan(f_new)) {
                t *= cfg.shrink;
                continue;
            }
            if (f_new <= res.f - cfg.armijo_c * decrease) {
                accepted = true;
                break;
            }
            t *= cfg.shrink;
        }
        if (!accepted) {
            // No further decrease representable along the projected gradient.
            res.converged = res.grad_norm <= std::sqrt(cfg.grad_tol) * std::max(1.0, std::abs(res.f));
            break;
        }
        // Barzilai-Borwein step for the next trial.
        double sy = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = x_new[i] - res.x[i];
            const double y = g_new[i] - g[i];
            sy += s * y;
            ss += s * s;
        }
        step = (sy > 0.0) ? std::clamp(ss / sy, 1e-12, cfg.max_step) : std::min(cfg.max_step, 2.0 * t);

        const double rel = std::abs(res.f - f_new) / std::max(std::abs(f_new), 1e-300);
        res.x.swap(x_new);
        g.swap(g_new);
        res.f = f_new;
        if (!std::isfinite(res.f)) {
            throw std::runtime_error("objective diverged");
        }
        if (rel < cfg.rel_tol) {
            const double gn = projected_grad_norm(res.x, g, lower);
            if (gn <= cfg.grad_tol * std::max(1.0, std::abs(res.f))) {
                res.grad_norm = gn;
                res.converged = true;
                ++res.iters;
                break;
            }
        }
    }
    return res;
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x,
                                     double h) {
    std::vector<double> g(x.size());
    std::vector<double> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double hi = h * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + hi;
        const double fp = f(xp);
        xp[i] = x[i] - hi;
        const double fm = f(xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    return g;
}

}  // namespace stpp::classical
