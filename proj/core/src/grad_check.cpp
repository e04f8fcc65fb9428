#include "stpp/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace stpp::ad {

GradCheckReport grad_check(const LossBuilder& loss, ParamStore& params, double h, double tol, double abs_floor) {
    std::map<std::string, Array> analytic;
    {
        Tape tape;
        const Var l = loss(tape, params);
        analytic = params.complete(tape.backward(l));
    }
    const auto value = [&]() {
        Tape tape;
        return loss(tape, params).value().item();
    };
    GradCheckReport report;
    for (auto& p : params.items()) {
        if (!p.trainable) {
            continue;
        }
        const Array& g = analytic.at(p.name);
        double diff2 = 0.0, ga2 = 0.0, gf2 = 0.0, max_abs = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double orig = p.value[i];
            const double step = h * std::max(1.0, std::abs(orig));
            p.value[i] = orig + step;
            const double fp = value();
            p.value[i] = orig - step;
            const double fm = value();
            p.value[i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            diff2 += (g[i] - fd) * (g[i] - fd);
            ga2 += g[i] * g[i];
            gf2 += fd * fd;
            max_abs = std::max(max_abs, std::abs(g[i] - fd));
        }
        const double denom = std::max({std::sqrt(ga2), std::sqrt(gf2), abs_floor});
        GradCheckEntry e{p.name, std::sqrt(diff2) / denom, max_abs};
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        report.passed = report.passed && e.rel_error < tol;
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace stpp::ad
