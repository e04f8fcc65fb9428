#pragma once

#include "stpp/autodiff.hpp"
#include "stpp/params.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stpp::ad {

struct GradCheckEntry {
    std::string name;
    /// ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||, abs_floor)
    double rel_error{0.0};
    double max_abs_error{0.0};
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error{0.0};
    bool passed{true};
};

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

/// Compares reverse-mode gradients of every trainable parameter with central
/// differences of step h (scaled by max(1, |theta|)).
[[nodiscard]] GradCheckReport grad_check(const LossBuilder& loss, ParamStore& params, double h = 1e-5,
                                         double tol = 1e-4, double abs_floor = 1e-8);

}  // namespace stpp::ad
