#include "stpp/gmm.hpp"

#include "stpp/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace stpp::classical {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logsumexp(std::span<const double> v) {
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx)) {
        return mx;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - mx);
    }
    return mx + std::log(acc);
}

std::vector<double> log_weights(const GmmPairwiseParams& p, double t, std::span<const SpacePoint> history) {
    std::vector<double> lw(history.size());
    for (std::size_t i = 0; i < history.size(); ++i) {
        lw[i] = -p.gamma * (t - history[i].t);
    }
    const double z = logsumexp(lw);
    for (auto& v : lw) {
        v -= z;
    }
    return lw;
}

struct Cholesky {
    Eigen::MatrixXd l;
    double log_det{0.0};
};

bool factor(const std::vector<double>& cov, std::size_t d, Cholesky& out) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(cov.data(),
                                                                                              static_cast<Eigen::Index>(d),
                                                                                              static_cast<Eigen::Index>(d));
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    out.l = llt.matrixL();
    out.log_det = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diag = out.l(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            return false;
        }
        out.log_det += 2.0 * std::log(diag);
    }
    return true;
}

double mvn_logpdf(std::span<const double> x, const std::vector<double>& mean, const Cholesky& c) {
    const auto d = static_cast<Eigen::Index>(mean.size());
    Eigen::VectorXd r(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        r(k) = x[static_cast<std::size_t>(k)] - mean[static_cast<std::size_t>(k)];
    }
    const Eigen::VectorXd y = c.l.triangularView<Eigen::Lower>().solve(r);
    return -0.5 * (static_cast<double>(d) * kLog2Pi + c.log_det + y.squaredNorm());
}

}  // namespace

void GmmPairwiseParams::validate() const {
    if (scales.empty()) {
        throw std::invalid_argument("pairwise GMM needs at least one bandwidth scale");
    }
    for (double s : scales) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw std::invalid_argument("singular bandwidth: scales must be positive and finite");
        }
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("time-decay gamma must be positive and finite");
    }
}

double gmm_pairwise_logprob(const GmmPairwiseParams& params, std::span<const double> x, double t,
                            std::span<const SpacePoint> history) {
    params.validate();
    if (history.empty()) {
        throw std::invalid_argument("pairwise GMM needs a nonempty history");
    }
    const std::size_t d = params.scales.size();
    if (x.size() != d) {
        throw std::invalid_argument("location dimension does not match bandwidth");
    }
    double log_norm = -0.5 * static_cast<double>(d) * kLog2Pi;
    for (double s : params.scales) {
        log_norm -= std::log(s);
    }
    auto terms = log_weights(params, t, history);
    for (std::size_t i = 0; i < history.size(); ++i) {
        double q = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double z = (x[k] - history[i].x[k]) / params.scales[k];
            q += z * z;
        }
        terms[i] += log_norm - 0.5 * q;
    }
    return logsumexp(terms);
}

std::vector<double> gmm_pairwise_mean(const GmmPairwiseParams& params, double t, std::span<const SpacePoint> history) {
    params.validate();
    if (history.empty()) {
        throw std::invalid_argument("pairwise GMM needs a nonempty history");
    }
    const auto lw = log_weights(params, t, history);
    std::vector<double> mean(params.scales.size(), 0.0);
    for (std::size_t i = 0; i < history.size(); ++i) {
        const double w = std::exp(lw[i]);
        for (std::size_t k = 0; k < mean.size(); ++k) {
            mean[k] += w * history[i].x[k];
        }
    }
    return mean;
}

double gmm_pairwise_nll(const GmmPairwiseParams& params, const std::vector<std::vector<SpacePoint>>& sequences,
                        std::size_t min_history) {
    if (min_history == 0) {
        throw std::invalid_argument("min_history must be at least 1");
    }
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& seq : sequences) {
        for (std::size_t i = min_history; i < seq.size(); ++i) {
            acc -= gmm_pairwise_logprob(params, seq[i].x, seq[i].t, std::span<const SpacePoint>(seq.data(), i));
            ++count;
        }
    }
    if (count == 0) {
        throw std::invalid_argument("no events with enough history to score");
    }
    return acc / static_cast<double>(count);
}

PairwiseFitResult gmm_pairwise_fit(const std::vector<std::vector<SpacePoint>>& sequences,
                                   const GmmPairwiseParams& init, std::size_t min_history, const DescentConfig& cfg) {
    init.validate();
    const std::size_t d = init.scales.size();
    const auto decode = [d](const std::vector<double>& x) {
        GmmPairwiseParams p;
        p.scales.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            p.scales[k] = std::exp(x[k]);
        }
        p.gamma = std::exp(x[d]);
        return p;
    };
    const auto value = [&](const std::vector<double>& x) {
        try {
            return gmm_pairwise_nll(decode(x), sequences, min_history);
        } catch (const std::invalid_argument&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const Objective objective = [&](const std::vector<double>& x, std::vector<double>* grad) {
        const double f = value(x);
        if (grad != nullptr && std::isfinite(f)) {
            *grad = numeric_gradient(value, x, 1e-5);
        }
        return f;
    };
    std::vector<double> x0(d + 1);
    for (std::size_t k = 0; k < d; ++k) {
        x0[k] = std::log(init.scales[k]);
    }
    x0[d] = std::log(init.gamma);
    DescentConfig c = cfg;
    // Finite-difference gradients cap the attainable gradient tolerance.
    c.grad_tol = std::max(c.grad_tol, 1e-7);
    const auto res = minimize(objective, x0, std::vector<std::optional<double>>(d + 1), c);
    return PairwiseFitResult{decode(res.x), res.f, res.iters, res.converged};
}

GmmKClusterParams gmm_kcluster_fit(const std::vector<std::vector<double>>& points, std::size_t k,
                                   const KClusterConfig& cfg) {
    if (k == 0) {
        throw std::invalid_argument("K must be at least 1");
    }
    if (points.size() < k) {
        throw std::invalid_argument("need at least K points to fit K clusters");
    }
    const std::size_t n = points.size();
    const std::size_t d = points.front().size();
    for (const auto& p : points) {
        if (p.size() != d) {
            throw std::invalid_argument("points disagree on dimension");
        }
    }
    Rng rng(cfg.seed, 0x6a4);

    // Pooled covariance used to initialize every component.
    std::vector<double> gmean(d, 0.0);
    for (const auto& p : points) {
        for (std::size_t a = 0; a < d; ++a) {
            gmean[a] += p[a] / static_cast<double>(n);
        }
    }
    std::vector<double> gcov(d * d, 0.0);
    for (const auto& p : points) {
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b < d; ++b) {
                gcov[a * d + b] += (p[a] - gmean[a]) * (p[b] - gmean[b]) / static_cast<double>(n);
            }
        }
    }
    for (std::size_t a = 0; a < d; ++a) {
        gcov[a * d + a] += cfg.reg;
    }

    const auto sqdist = [d](const std::vector<double>& u, const std::vector<double>& v) {
        double acc = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            acc += (u[a] - v[a]) * (u[a] - v[a]);
        }
        return acc;
    };

    for (std::size_t attempt = 0; attempt <= cfg.max_reseeds; ++attempt) {
        GmmKClusterParams model;
        model.d = d;
        // k-means++ seeding
        std::vector<std::size_t> centers{static_cast<std::size_t>(rng.below(n))};
        std::vector<double> dist(n);
        while (centers.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (auto c : centers) {
                    best = std::min(best, sqdist(points[i], points[c]));
                }
                dist[i] = best;
                total += best;
            }
            std::size_t pick = static_cast<std::size_t>(rng.below(n));
            if (total > 0.0) {
                double u = rng.uniform() * total;
                for (std::size_t i = 0; i < n; ++i) {
                    u -= dist[i];
                    if (u <= 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
            centers.push_back(pick);
        }
        for (auto c : centers) {
            model.components.push_back(GmmComponent{points[c], gcov, 1.0 / static_cast<double>(k)});
        }

        bool degenerate = false;
        double prev_ll = -std::numeric_limits<double>::infinity();
        std::vector<double> resp(n * k);
        std::vector<double> row(k);
        std::vector<Cholesky> chol(k);
        for (std::size_t it = 0; it < cfg.max_iters && !degenerate; ++it) {
            for (std::size_t j = 0; j < k; ++j) {
                if (!factor(model.components[j].cov, d, chol[j])) {
                    degenerate = true;
                }
            }
            if (degenerate) {
                break;
            }
            // E-step; the log-likelihood here is that of the current parameters.
            double ll = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < k; ++j) {
                    row[j] = std::log(model.components[j].weight) + mvn_logpdf(points[i], model.components[j].mean, chol[j]);
                }
                const double z = logsumexp(row);
                ll += z;
                for (std::size_t j = 0; j < k; ++j) {
                    resp[i * k + j] = std::exp(row[j] - z);
                }
            }
            if (it > 0) {
                model.loglik_trace.push_back(ll);
            }
            if (it > 1 && std::abs(ll - prev_ll) <= cfg.tol * std::max(1.0, std::abs(ll))) {
                break;
            }
            prev_ll = ll;
            // M-step
            for (std::size_t j = 0; j < k; ++j) {
                double nk = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    nk += resp[i * k + j];
                }
                if (nk < 1e-10 * static_cast<double>(n)) {
                    degenerate = true;
                    break;
                }
                auto& comp = model.components[j];
                comp.weight = nk / static_cast<double>(n);
                std::fill(comp.mean.begin(), comp.mean.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t a = 0; a < d; ++a) {
                        comp.mean[a] += resp[i * k + j] * points[i][a];
                    }
                }
                for (auto& v : comp.mean) {
                    v /= nk;
                }
                std::fill(comp.cov.begin(), comp.cov.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = resp[i * k + j];
                    for (std::size_t a = 0; a < d; ++a) {
                        const double da = points[i][a] - comp.mean[a];
                        for (std::size_t b = 0; b < d; ++b) {
                            comp.cov[a * d + b] += r * da * (points[i][b] - comp.mean[b]);
                        }
                    }
                }
                for (auto& v : comp.cov) {
                    v /= nk;
                }
                for (std::size_t a = 0; a < d; ++a) {
                    comp.cov[a * d + a] += cfg.reg;
                }
            }
        }
        if (!degenerate) {
            // Final likelihood of the returned parameters.
            double ll = 0.0;
            for (std::size_t j = 0; j < k && !degenerate; ++j) {
                degenerate = !factor(model.components[j].cov, d, chol[j]);
            }
            if (!degenerate) {
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        row[j] = std::log(model.components[j].weight) +
                                 mvn_logpdf(points[i], model.components[j].mean, chol[j]);
                    }
                    ll += logsumexp(row);
                }
                model.loglik_trace.push_back(ll);
                return model;
            }
        }
    }
    throw std::runtime_error("EM produced an empty or singular cluster after " + std::to_string(cfg.max_reseeds) +
                             " reseeds");
}

double gmm_kcluster_logprob(const GmmKClusterParams& params, std::span<const double> x) {
    if (x.size() != params.d) {
        throw std::invalid_argument("location dimension does not match the mixture");
    }
    std::vector<double> terms;
    terms.reserve(params.components.size());
    for (const auto& c : params.components) {
        Cholesky ch;
        if (!factor(c.cov, params.d, ch)) {
            throw std::runtime_error("mixture covariance is not positive definite");
        }
        terms.push_back(std::log(c.weight) + mvn_logpdf(x, c.mean, ch));
    }
    return logsumexp(terms);
}

std::vector<double> gmm_kcluster_mean(const GmmKClusterParams& params) {
    std::vector<double> mean(params.d, 0.0);
    for (const auto& c : params.components) {
        for (std::size_t a = 0; a < params.d; ++a) {
            mean[a] += c.weight * c.mean[a];
        }
    }
    return mean;
}

}  // namespace stpp::classical
