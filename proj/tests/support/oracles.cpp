#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>

namespace stpp::oracle {

double trapezoid(const std::function<double(double)>& f, double a, double b, std::size_t n) {
    const double h = (b - a) / static_cast<double>(n);
    double acc = 0.5 * (f(a) + f(b));
    for (std::size_t i = 1; i < n; ++i) {
        acc += f(a + h * static_cast<double>(i));
    }
    return acc * h;
}

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
    if (n % 2 != 0) {
        ++n;
    }
    const double h = (b - a) / static_cast<double>(n);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < n; ++i) {
        acc += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
    }
    return acc * h / 3.0;
}

double hawkes_intensity(double mu, double alpha, double beta, const std::vector<double>& history, double t) {
    double acc = mu;
    for (double ti : history) {
        if (ti < t) {
            acc += alpha / beta * std::exp(-(t - ti) / beta);
        }
    }
    return acc;
}

std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                              const std::vector<double>& v, std::size_t lq, std::size_t lk, std::size_t dk,
                              std::size_t dv, const std::vector<double>* mask) {
    std::vector<double> out(lq * dv, 0.0);
    for (std::size_t i = 0; i < lq; ++i) {
        std::vector<double> score(lk);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
            if (mask != nullptr && (*mask)[i * lk + j] != 0.0) {
                score[j] = -std::numeric_limits<double>::infinity();
                continue;
            }
            double s = 0.0;
            for (std::size_t c = 0; c < dk; ++c) {
                s += q[i * dk + c] * k[j * dk + c];
            }
            score[j] = s / std::sqrt(static_cast<double>(dk));
            best = std::max(best, score[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < lk; ++j) {
            score[j] = std::isinf(score[j]) ? 0.0 : std::exp(score[j] - best);
            z += score[j];
        }
        for (std::size_t j = 0; j < lk; ++j) {
            for (std::size_t c = 0; c < dv; ++c) {
                out[i * dv + c] += score[j] / z * v[j * dv + c];
            }
        }
    }
    return out;
}

double determinant(std::vector<double> a, std::size_t n) {
    double det = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) {
                piv = r;
            }
        }
        if (a[piv * n + c] == 0.0) {
            return 0.0;
        }
        if (piv != c) {
            for (std::size_t k = 0; k < n; ++k) {
                std::swap(a[piv * n + k], a[c * n + k]);
            }
            det = -det;
        }
        det *= a[c * n + c];
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (std::size_t k = c; k < n; ++k) {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    return det;
}

std::vector<double> inverse(std::vector<double> a, std::size_t n) {
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        inv[i * n + i] = 1.0;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) {
                piv = r;
            }
        }
        if (a[piv * n + c] == 0.0) {
            throw std::runtime_error("singular matrix");
        }
        for (std::size_t k = 0; k < n; ++k) {
            std::swap(a[piv * n + k], a[c * n + k]);
            std::swap(inv[piv * n + k], inv[c * n + k]);
        }
        const double p = a[c * n + c];
        for (std::size_t k = 0; k < n; ++k) {
            a[c * n + k] /= p;
            inv[c * n + k] /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) {
                continue;
            }
            const double f = a[r * n + c];
            for (std::size_t k = 0; k < n; ++k) {
                a[r * n + k] -= f * a[c * n + k];
                inv[r * n + k] -= f * inv[c * n + k];
            }
        }
    }
    return inv;
}

double mvn_logpdf(const std::vector<double>& x, const std::vector<double>& mu, const std::vector<double>& cov) {
    const std::size_t d = x.size();
    const auto inv = inverse(cov, d);
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            quad += (x[i] - mu[i]) * inv[i * d + j] * (x[j] - mu[j]);
        }
    }
    return -0.5 * quad - 0.5 * std::log(determinant(cov, d)) -
           0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
}

double jacobian_logdet(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                       const std::vector<double>& z, double h) {
    const std::size_t d = z.size();
    std::vector<double> jac(d * d);
    for (std::size_t c = 0; c < d; ++c) {
        auto zp = z, zm = z;
        zp[c] += h;
        zm[c] -= h;
        const auto fp = f(zp), fm = f(zm);
        for (std::size_t r = 0; r < d; ++r) {
            jac[r * d + c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    return std::log(std::abs(determinant(jac, d)));
}

MeanStd mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

MeanStd hawkes_next_time_mc(double mu, double alpha, double beta, const std::vector<double>& history,
                            std::size_t paths, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double start = history.empty() ? 0.0 : history.back();
    // Excitation just after the last history event.
    double excite = 0.0;
    for (double ti : history) {
        excite += alpha / beta * std::exp(-(start - ti) / beta);
    }
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        double t = start;
        while (true) {
            // Intensity decays between events, so its current value bounds the future.
            const double bound = mu + excite * std::exp(-(t - start) / beta);
            t += -std::log(1.0 - unif(gen)) / bound;
            const double lam = mu + excite * std::exp(-(t - start) / beta);
            if (unif(gen) * bound <= lam) {
                break;
            }
        }
        acc += t;
        acc2 += t * t;
    }
    const double n = static_cast<double>(paths);
    const double mean = acc / n;
    return {mean, std::sqrt(std::max(0.0, acc2 / n - mean * mean))};
}

std::vector<double> covariance(const std::vector<std::vector<double>>& points) {
    const std::size_t d = points.front().size();
    std::vector<double> mean(d, 0.0);
    for (const auto& p : points) {
        for (std::size_t k = 0; k < d; ++k) {
            mean[k] += p[k];
        }
    }
    for (auto& m : mean) {
        m /= static_cast<double>(points.size());
    }
    std::vector<double> cov(d * d, 0.0);
    for (const auto& p : points) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]);
            }
        }
    }
    for (auto& c : cov) {
        c /= static_cast<double>(points.size());
    }
    return cov;
}

}  // namespace stpp::oracle
