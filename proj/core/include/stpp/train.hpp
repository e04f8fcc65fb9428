#pragma once

#include "stpp/autodiff.hpp"
#include "stpp/events.hpp"
#include "stpp/heads.hpp"
#include "stpp/neural.hpp"
#include "stpp/params.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stpp::train {

using ad::Array;
using ad::ParamStore;
using ad::Tape;
using ad::Var;
using events::EventSequence;
using events::NormStats;
using neural::NetConfig;

enum class Ablation { none, zero_encoder, zero_decoder };
enum class TimeSource { true_times, sampled };

[[nodiscard]] std::string to_string(Ablation a);
[[nodiscard]] Ablation ablation_from_string(const std::string& name);
[[nodiscard]] std::string to_string(TimeSource s);
[[nodiscard]] TimeSource time_source_from_string(const std::string& name);

/// Step decay on plateau: lr *= factor after `patience` epochs without a new
/// best validation loss, never below min_lr.
struct ScheduleConfig {
    double factor{0.5};
    std::size_t patience{50};
    double min_lr{1e-5};
};

struct TrainConfig {
    std::size_t epochs{1000};
    std::size_t batch_size{32};
    double lr0{1e-3};
    ScheduleConfig schedule{};
    std::uint64_t seed{0};
    Ablation ablation{Ablation::none};
    TimeSource time_source{TimeSource::true_times};
    /// Global gradient-norm clip; 0 disables.
    double clip_norm{0.0};
    /// Written after every improvement of the validation loss when set.
    std::optional<std::filesystem::path> checkpoint_path;
    /// Extra metadata stored in the checkpoint header (e.g. normalization).
    nlohmann::json checkpoint_meta = nlohmann::json::object();
    /// CSV `epoch,train_loss,val_loss,lr` when set.
    std::optional<std::filesystem::path> log_path;
    bool verbose{false};

    void validate() const;
};

/// Network configuration plus its parameters.
struct Model {
    NetConfig cfg;
    ParamStore params;
};

[[nodiscard]] Model init_model(const NetConfig& cfg, std::uint64_t seed);

/// Dense tensors for a batch of normalized sequences.
struct Batch {
    Array enc_in;    // (B, n, d+2): [interval, x, m] per history event
    Array dec_in;    // (B, L, d+2): shifted true outputs, or zeros
    Array t_target;  // (B, L): normalized output intervals
    Array x_target;  // (B, L, d)
};

/// Lower/upper clamp applied to normalized interval targets so that
/// coincident events and intervals beyond the training maximum stay inside
/// the open support of the time flow.
inline constexpr double kIntervalEps = 1e-6;

/// Builds a batch. With `teacher` the decoder receives the true outputs
/// shifted right by one slot (slot 0 is zero); otherwise zeros. Ablations
/// zero the encoder or decoder inputs regardless of `teacher`.
[[nodiscard]] Batch make_batch(std::span<const EventSequence> seqs, std::span<const std::size_t> index,
                               const NetConfig& cfg, Ablation ablation, bool teacher);
[[nodiscard]] Batch make_batch(std::span<const EventSequence> seqs, const NetConfig& cfg, Ablation ablation,
                               bool teacher);

struct ForwardOut {
    neural::EncodedHistory encoded;
    neural::DecodedOutputs decoded;
    Var beta;  // (B, L)
};

[[nodiscard]] ForwardOut forward(Tape& tape, const Model& model, const Batch& batch, const neural::Mode& mode);

struct BatchLogProbs {
    Var time;   // (B, L)
    Var space;  // (B, L)
};

/// Per-slot log densities; the spatial head is fed `t_input` (B, L).
[[nodiscard]] BatchLogProbs log_probs(Tape& tape, const Model& model, const Batch& batch, const ForwardOut& fwd,
                                      const Array& t_input);

/// Mean over the batch of -sum_l [log p_l(t_l) + log p_l(x_l | t_l)] with
/// true times fed to the spatial head.
[[nodiscard]] Var loss_multi_event(Tape& tape, const Model& model, const Batch& batch, const neural::Mode& mode);

/// Plain evaluation loss (no dropout, decoder fed zeros) averaged over sequences.
[[nodiscard]] double eval_loss(const Model& model, std::span<const EventSequence> seqs, Ablation ablation,
                               std::size_t batch_size = 64);

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, const std::map<std::string, Array>& grads, double lr);
    [[nodiscard]] std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_{0};
    std::map<std::string, Array> m_, v_;
};

struct EpochLog {
    std::size_t epoch{0};
    double train_loss{0.0};
    double val_loss{0.0};
    double lr{0.0};
};

struct TrainResult {
    std::vector<EpochLog> history;
    double best_val{0.0};
    std::size_t best_epoch{0};
    /// Set when training stopped on a non-finite loss; params hold the best
    /// checkpoint reached before that.
    bool aborted{false};
    std::string abort_reason;
};

/// Adam training with plateau step decay; the model ends holding the
/// parameters of the best validation epoch (epoch 0 is the initial model).
[[nodiscard]] TrainResult train(Model& model, const std::vector<EventSequence>& train_split,
                                const std::vector<EventSequence>& val_split, const TrainConfig& cfg);

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& history);

struct MeanStd {
    double mean{0.0};
    double std{0.0};
};

/// Population mean and standard deviation.
[[nodiscard]] MeanStd mean_std(std::span<const double> values);

struct EvalResult {
    MeanStd time;
    MeanStd space;
    MeanStd joint;
    std::vector<double> per_sequence_time;
    std::vector<double> per_sequence_space;
};

struct EvalConfig {
    TimeSource time_source{TimeSource::true_times};
    Ablation ablation{Ablation::none};
    std::size_t samples{1000};
    std::uint64_t seed{0};
    std::size_t batch_size{64};
};

/// Test-protocol NLL of the L output events per sequence (decoder fed zeros,
/// no regularizers); joint = time + space.
[[nodiscard]] EvalResult evaluate(const Model& model, std::span<const EventSequence> split,
                                  const EvalConfig& cfg = {});

struct Prediction {
    /// Mean sampled normalized intervals per output slot.
    std::vector<double> dt_hat_norm;
    /// Absolute reconstructed times t_hat_l = dt_hat_l + t_hat_{l-1}.
    std::vector<double> t_hat;
    std::vector<std::vector<double>> x_hat;
    std::vector<double> beta;
    /// Per-slot NLL of the true outputs when the sequence carries them.
    std::vector<double> nll_time;
    std::vector<double> nll_space;
};

[[nodiscard]] Prediction predict(const Model& model, const EventSequence& seq, const NormStats& stats,
                                 const EvalConfig& cfg = {});

[[nodiscard]] nlohmann::json to_json(const Prediction& p);

struct GridConfig {
    std::size_t steps{100};
    /// Half-width of the automatic window in sample standard deviations.
    double sigmas{6.0};
    /// Explicit window in original units; overrides the automatic one.
    std::optional<std::array<double, 4>> bounds;  // x1_min, x1_max, x2_min, x2_max
    /// Depth of the slice for d = 3; defaults to the true event's depth.
    std::optional<double> depth;
    std::size_t max_cells{1'000'000};
    bool differences{true};
    std::size_t samples{2000};
    std::uint64_t seed{0};
    TimeSource time_source{TimeSource::true_times};
};

/// Spatial log densities (original units) of each output slot on a regular
/// 2-d grid, plus consecutive-slot density differences.
[[nodiscard]] nlohmann::json export_density(const Model& model, const EventSequence& seq, const NormStats& stats,
                                            const GridConfig& cfg = {});

/// Log density of x (original units) for slot `slot` of one sequence: the
/// normalized density minus the log standardization Jacobian.
[[nodiscard]] std::vector<double> space_logprob_points(const Model& model, const EventSequence& seq,
                                                       const NormStats& stats, std::size_t slot,
                                                       const std::vector<std::vector<double>>& points,
                                                       double t_input);

void save_model(const std::filesystem::path& path, const Model& model, const NormStats& stats,
                const nlohmann::json& extra = nlohmann::json::object());

struct LoadedModel {
    Model model;
    NormStats stats;
    nlohmann::json meta;
};

[[nodiscard]] LoadedModel load_model(const std::filesystem::path& path);

[[nodiscard]] nlohmann::json to_json(const NormStats& s);
[[nodiscard]] NormStats norm_stats_from_json(const nlohmann::json& j);

}  // namespace stpp::train
