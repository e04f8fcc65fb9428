#include "stpp/pipeline.hpp"

#include <stdexcept>

namespace stpp::pipeline {

std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::homo_poisson: return "homo-poisson";
        case BaselineKind::hawkes: return "hawkes";
        case BaselineKind::self_correcting: return "self-correcting";
        case BaselineKind::gmm_pairwise: return "gmm-pairwise";
        case BaselineKind::gmm_kcluster: return "gmm-kcluster";
        case BaselineKind::gaussian: return "gaussian";
    }
    return "unknown";
}

BaselineKind baseline_kind_from_string(const std::string& name) {
    for (auto k : {BaselineKind::homo_poisson, BaselineKind::hawkes, BaselineKind::self_correcting,
                   BaselineKind::gmm_pairwise, BaselineKind::gmm_kcluster, BaselineKind::gaussian}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw std::invalid_argument("unknown baseline '" + name +
                                "' (homo-poisson, hawkes, self-correcting, gmm-pairwise, gmm-kcluster, gaussian)");
}

bool is_temporal(BaselineKind k) {
    return k == BaselineKind::homo_poisson || k == BaselineKind::hawkes || k == BaselineKind::self_correcting;
}

namespace {

void require_normalized(std::span<const events::EventSequence> split) {
    if (split.empty()) {
        throw std::invalid_argument("split is empty");
    }
    for (const auto& s : split) {
        if (!s.normalized) {
            throw std::invalid_argument("baselines expect normalized sequences");
        }
    }
}

}  // namespace

std::vector<std::vector<double>> time_sequences(std::span<const events::EventSequence> split) {
    require_normalized(split);
    std::vector<std::vector<double>> out;
    out.reserve(split.size());
    for (const auto& s : split) {
        out.push_back(events::scaled_times(s));
    }
    return out;
}

std::vector<std::vector<classical::SpacePoint>> space_sequences(std::span<const events::EventSequence> split) {
    require_normalized(split);
    std::vector<std::vector<classical::SpacePoint>> out;
    out.reserve(split.size());
    for (const auto& s : split) {
        const auto times = events::scaled_times(s);
        auto& seq = out.emplace_back();
        for (std::size_t i = 0; i < s.size(); ++i) {
            seq.push_back({times[i], s.events[i].x});
        }
    }
    return out;
}

classical::FitResult fit_temporal(BaselineKind kind, std::span<const events::EventSequence> train,
                                  const BaselineFitConfig& cfg) {
    const auto seqs = time_sequences(train);
    switch (kind) {
        case BaselineKind::homo_poisson: return classical::fit_mle(classical::TemporalKind::poisson, seqs, cfg.descent);
        case BaselineKind::hawkes: return classical::fit_mle(classical::TemporalKind::hawkes, seqs, cfg.descent);
        case BaselineKind::self_correcting:
            return classical::fit_mle(classical::TemporalKind::self_correcting, seqs, cfg.descent);
        default: throw std::invalid_argument(to_string(kind) + " is not a temporal baseline");
    }
}

classical::SpaceModel fit_space(BaselineKind kind, std::span<const events::EventSequence> train,
                                const BaselineFitConfig& cfg) {
    if (kind == BaselineKind::gmm_pairwise) {
        const auto seqs = space_sequences(train);
        classical::GmmPairwiseParams init;
        init.scales.assign(seqs.front().front().x.size(), 0.5);
        init.gamma = 1.0;
        return classical::gmm_pairwise_fit(seqs, init, cfg.min_history, cfg.descent).params;
    }
    if (kind == BaselineKind::gmm_kcluster || kind == BaselineKind::gaussian) {
        require_normalized(train);
        std::vector<std::vector<double>> points;
        for (const auto& s : train) {
            for (const auto& e : s.events) {
                points.push_back(e.x);
            }
        }
        const std::size_t k = kind == BaselineKind::gaussian ? 1 : cfg.clusters;
        return classical::gmm_kcluster_fit(points, k, cfg.kcluster);
    }
    throw std::invalid_argument(to_string(kind) + " is not a spatial baseline");
}

train::EvalResult evaluate_baseline(const classical::BaselineModels& models,
                                    std::span<const events::EventSequence> split,
                                    const classical::BaselineOptions& opts) {
    require_normalized(split);
    classical::BaselineOptions o = opts;
    o.test_mode = true;
    train::EvalResult res;
    std::vector<double> joint;
    for (const auto& s : split) {
        const auto times = events::scaled_times(s);
        std::vector<std::vector<double>> locs;
        locs.reserve(s.size());
        for (const auto& e : s.events) {
            locs.push_back(e.x);
        }
        const auto terms = classical::baseline_loss(models, times, locs, s.n_in, o);
        const double nt = models.time ? terms.output_time_sum() : 0.0;
        const double ns = models.space ? terms.output_space_sum() : 0.0;
        res.per_sequence_time.push_back(nt);
        res.per_sequence_space.push_back(ns);
        joint.push_back(nt + ns);
    }
    res.time = train::mean_std(res.per_sequence_time);
    res.space = train::mean_std(res.per_sequence_space);
    res.joint = train::mean_std(joint);
    return res;
}

}  // namespace stpp::pipeline
