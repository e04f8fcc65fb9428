#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace stpp::classical {

/// Objective returning f(x); fills `grad` when non-null.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>* grad)>;

struct DescentConfig {
    std::size_t max_iters{5000};
    /// Relative objective change below which the run may stop...
    double rel_tol{1e-8};
    /// ...provided the projected gradient is also below grad_tol * max(1, |f|).
    double grad_tol{1e-10};
    double armijo_c{1e-4};
    double shrink{0.5};
    std::size_t max_backtracks{60};
    double initial_step{1e-3};
    double max_step{1e6};
};

struct DescentResult {
    std::vector<double> x;
    double f{std::numeric_limits<double>::infinity()};
    std::size_t iters{0};
    bool converged{false};
    double grad_norm{0.0};
};

/// Projected gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking. `lower[i]`, when set, is a box bound on coordinate i.
/// Throws std::runtime_error if the objective becomes NaN.
[[nodiscard]] DescentResult minimize(const Objective& f,
                                     std::vector<double> x0,
                                     const std::vector<std::optional<double>>& lower,
                                     const DescentConfig& cfg = {});

/// Central-difference gradient of a value-only objective.
[[nodiscard]] std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                   const std::vector<double>& x,
                                                   double h = 1e-6);

}  // namespace stpp::classical
