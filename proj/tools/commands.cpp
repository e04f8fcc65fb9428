#include "commands.hpp"

#include "config.hpp"

#include "stpp/events.hpp"
#include "stpp/io.hpp"
#include "stpp/pipeline.hpp"
#include "stpp/rng.hpp"
#include "stpp/simulate.hpp"
#include "stpp/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace stpp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Failure after arguments were accepted; carries the exit code.
class CommandError : public std::runtime_error {
public:
    CommandError(const std::string& type, const std::string& msg, int code = 1)
        : std::runtime_error(msg), type_(type), code_(code) {}
    [[nodiscard]] const std::string& type() const { return type_; }
    [[nodiscard]] int code() const { return code_; }

private:
    std::string type_;
    int code_;
};

template <typename T>
void override_opt(json& j, const std::string& section, const std::string& key, const std::optional<T>& v) {
    if (v) {
        set_override(j, section, key, *v);
    }
}

/// Config file as JSON; relative [paths] entries are resolved against the
/// file's directory.
json load_config(const std::string& path) {
    if (path.empty()) {
        return json::object();
    }
    json j = read_config_file(path);
    if (j.is_object() && j.contains("paths") && j["paths"].is_object()) {
        const fs::path base = fs::path(path).parent_path();
        for (const char* key : {"data", "out"}) {
            auto& p = j["paths"];
            if (p.contains(key) && p[key].is_string()) {
                const fs::path v = p[key].get<std::string>();
                if (v.is_relative()) {
                    p[key] = (base / v).lexically_normal().string();
                }
            }
        }
    }
    return j;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::binary);
    if (!f) {
        throw CommandError("filesystem", "cannot open " + p.string() + " for writing");
    }
    f << text;
    if (!f) {
        throw CommandError("filesystem", "failed writing " + p.string());
    }
}

void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) {
        throw CommandError("non-finite", what + " is not finite");
    }
}

void require_dir(const std::string& dir, const std::string& what) {
    if (dir.empty()) {
        throw CommandError("usage", what + " directory not given", 2);
    }
    if (!fs::is_directory(dir)) {
        throw CommandError("filesystem", what + " directory not found: " + dir);
    }
}

std::string pm(const train::MeanStd& m) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << m.mean << "±" << m.std;
    return os.str();
}

json mean_std_json(const train::MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

/// "test_0" style identifier into a split name and index.
std::pair<std::string, std::size_t> parse_sequence_id(const std::string& id) {
    const auto pos = id.rfind('_');
    if (pos == std::string::npos || pos + 1 == id.size()) {
        throw CommandError("usage", "sequence id must look like test_0, val_3 or train_12: " + id, 2);
    }
    const std::string split = id.substr(0, pos);
    if (split != "train" && split != "val" && split != "test") {
        throw CommandError("usage", "unknown split in sequence id: " + id, 2);
    }
    std::size_t idx = 0;
    try {
        std::size_t used = 0;
        idx = std::stoul(id.substr(pos + 1), &used);
        if (used != id.size() - pos - 1) {
            throw std::invalid_argument("trailing characters");
        }
    } catch (const std::exception&) {
        throw CommandError("usage", "bad index in sequence id: " + id, 2);
    }
    return {split, idx};
}

const std::vector<events::EventSequence>& split_of(const events::SequenceDataset& ds, const std::string& name) {
    if (name == "train") {
        return ds.train;
    }
    if (name == "val") {
        return ds.val;
    }
    if (name == "test") {
        return ds.test;
    }
    throw CommandError("usage", "unknown split '" + name + "' (train, val, test)", 2);
}

/// Dataset renormalized with the checkpoint's statistics.
struct ModelAndData {
    train::LoadedModel loaded;
    io::LoadedDataset data;
    events::SequenceDataset normalized;
};

ModelAndData load_model_and_data(const std::string& ckpt, const std::string& data_dir) {
    if (ckpt.empty()) {
        throw CommandError("usage", "--ckpt is required", 2);
    }
    if (!fs::exists(ckpt)) {
        throw CommandError("filesystem", "checkpoint not found: " + ckpt);
    }
    require_dir(data_dir, "dataset");
    ModelAndData out{train::load_model(ckpt), io::load_dataset(data_dir), {}};
    if (out.data.manifest.d != out.loaded.model.cfg.d_space ||
        out.data.manifest.n_in != out.loaded.model.cfg.n_in ||
        out.data.manifest.l_out != out.loaded.model.cfg.l_out) {
        throw CommandError("mismatch", "dataset shape (d, n_in, l_out) differs from the checkpoint's network");
    }
    events::SequenceDataset raw = out.data.raw;
    raw.stats = out.loaded.stats;
    out.normalized = events::normalize(raw);
    return out;
}

std::pair<const events::EventSequence*, const events::EventSequence*> find_sequence(const ModelAndData& md,
                                                                                     const std::string& id) {
    const auto [split, idx] = parse_sequence_id(id);
    const auto& norm = split_of(md.normalized, split);
    if (idx >= norm.size()) {
        throw CommandError("usage", id + " out of range: split '" + split + "' has " + std::to_string(norm.size()) +
                                        " sequences", 2);
    }
    return {&norm[idx], &split_of(md.data.raw, split)[idx]};
}

std::string write_or_print(const std::string& path, const json& j, std::ostream& out) {
    if (path.empty()) {
        out << j.dump(2) << '\n';
        return "";
    }
    write_text(path, j.dump(2) + "\n");
    return path;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string config;
    std::string kind;
    std::optional<std::size_t> clusters, per_cluster, n;
    std::optional<double> mu, alpha, beta, radial_std, tangential_std, rate, horizon;
    double lambda{1.0};
    std::size_t d{2};
    std::optional<std::uint64_t> seed;
    std::string output;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    json j = load_config(a.config);
    override_opt(j, "simulate", "clusters", a.clusters);
    override_opt(j, "simulate", "per_cluster", a.per_cluster);
    override_opt(j, "simulate", "mu", a.mu);
    override_opt(j, "simulate", "alpha", a.alpha);
    override_opt(j, "simulate", "beta", a.beta);
    override_opt(j, "simulate", "radial_std", a.radial_std);
    override_opt(j, "simulate", "tangential_std", a.tangential_std);
    override_opt(j, "simulate", "rate", a.rate);
    override_opt(j, "simulate", "seed", a.seed);
    const RunConfig rc = parse_run_config(j);
    const auto& sc = rc.simulate;

    Rng rng(sc.seed);
    std::vector<events::Event> evs;
    json params;
    std::size_t d = a.d;
    if (a.kind == "pinwheel") {
        if (d != 2) {
            throw CommandError("usage", "pinwheel data is 2-dimensional", 2);
        }
        const auto temporal = classical::TemporalModelParams::hawkes(sc.mu, sc.alpha, sc.beta);
        evs = simulate::make_pinwheel_dataset(sc.pinwheel, temporal, rng);
        params = {{"clusters", sc.pinwheel.n_clusters},   {"per_cluster", sc.pinwheel.per_cluster},
                  {"radial_std", sc.pinwheel.radial_std}, {"tangential_std", sc.pinwheel.tangential_std},
                  {"rate", sc.pinwheel.rate},             {"temporal", io::to_json(temporal)}};
    } else {
        classical::TemporalModelParams model;
        if (a.kind == "hawkes") {
            model = classical::TemporalModelParams::hawkes(sc.mu, sc.alpha, sc.beta);
        } else if (a.kind == "poisson") {
            model = classical::TemporalModelParams::poisson(a.lambda);
        } else if (a.kind == "self-correcting") {
            model = classical::TemporalModelParams::self_correcting(sc.mu, sc.alpha, sc.beta);
        } else {
            throw CommandError("usage", "unknown simulation kind '" + a.kind +
                                            "' (pinwheel, hawkes, poisson, self-correcting)", 2);
        }
        model.validate();
        if (a.n.has_value() == a.horizon.has_value()) {
            throw CommandError("usage", "give exactly one of -n and --horizon", 2);
        }
        const std::vector<double> times =
            a.n ? simulate::thinning_count(model, *a.n, rng) : simulate::thinning_until(model, *a.horizon, rng);
        evs = simulate::temporal_events(times, d);
        params = io::to_json(model);
        if (a.n) {
            params["n"] = *a.n;
        } else {
            params["horizon"] = *a.horizon;
        }
    }
    std::ostringstream csv;
    events::write_event_csv(csv, evs, d);
    if (a.output.empty()) {
        out << csv.str();
        return;
    }
    write_text(a.output, csv.str());
    const json manifest = {{"kind", a.kind},        {"seed", sc.seed},  {"d", d},
                           {"n_events", evs.size()}, {"params", params}, {"csv", fs::path(a.output).filename()}};
    write_text(a.output + ".json", manifest.dump(2) + "\n");
}

// ------------------------------------------------------------ ingest/split

struct WindowArgs {
    std::string config;
    std::string input;
    std::optional<std::size_t> d, seq_len, input_length, output_length, overlap;
    std::optional<std::uint64_t> seed;
    std::vector<double> fractions;
    std::string output;
};

RunConfig window_config(const WindowArgs& a) {
    json j = load_config(a.config);
    override_opt(j, "data", "d", a.d);
    override_opt(j, "data", "seq_len", a.seq_len);
    override_opt(j, "data", "input_length", a.input_length);
    override_opt(j, "data", "output_length", a.output_length);
    override_opt(j, "data", "overlap", a.overlap);
    override_opt(j, "data", "seed", a.seed);
    // Only one of input/output length given: derive the other from seq_len.
    auto& data = j["data"];
    if (data.is_object() && data.contains("seq_len")) {
        const auto n = data["seq_len"].get<long long>();
        if (data.contains("output_length") && !data.contains("input_length")) {
            data["input_length"] = n - data["output_length"].get<long long>();
        } else if (data.contains("input_length") && !data.contains("output_length")) {
            data["output_length"] = n - data["input_length"].get<long long>();
        }
    }
    if (data.is_null()) {
        j.erase("data");
    }
    return parse_run_config(j);
}

std::vector<events::EventSequence> windows_from_csv(const std::string& path, const DataConfig& dc) {
    std::ifstream in(path);
    if (!in) {
        throw CommandError("filesystem", "cannot read " + path);
    }
    const auto evs = events::parse_event_csv(in, dc.d);
    auto windows = events::window_sequences(evs, dc.seq_len, dc.overlap, dc.output_length);
    if (windows.size() < 3) {
        throw CommandError("data", path + " yields " + std::to_string(windows.size()) +
                                       " windows; train, val and test need at least 3");
    }
    return windows;
}

json windows_json(const std::vector<events::EventSequence>& windows, const DataConfig& dc, const std::string& source) {
    json seqs = json::array();
    for (const auto& w : windows) {
        seqs.push_back(io::to_json(w));
    }
    return {{"d", dc.d},
            {"seq_len", dc.seq_len},
            {"n_in", dc.input_length},
            {"l_out", dc.output_length},
            {"overlap", dc.overlap},
            {"source", source},
            {"sequences", seqs}};
}

void cmd_ingest(const WindowArgs& a, std::ostream& out) {
    const RunConfig rc = window_config(a);
    const auto windows = windows_from_csv(a.input, rc.data);
    const json j = windows_json(windows, rc.data, fs::path(a.input).filename().string());
    if (a.output.empty()) {
        out << j.dump() << '\n';
        return;
    }
    write_text(a.output, j.dump() + "\n");
    out << json{{"windows", windows.size()}, {"output", a.output}}.dump() << '\n';
}

void cmd_split(const WindowArgs& a, std::ostream& out) {
    RunConfig rc = window_config(a);
    if (a.output.empty()) {
        throw CommandError("usage", "split needs an output directory (-o)", 2);
    }
    std::vector<events::EventSequence> windows;
    std::string source = fs::path(a.input).filename().string();
    if (fs::path(a.input).extension() == ".csv") {
        windows = windows_from_csv(a.input, rc.data);
    } else {
        const json j = io::read_json(a.input);
        rc.data.d = j.at("d").get<std::size_t>();
        rc.data.seq_len = j.at("seq_len").get<std::size_t>();
        rc.data.input_length = j.at("n_in").get<std::size_t>();
        rc.data.output_length = j.at("l_out").get<std::size_t>();
        rc.data.overlap = j.at("overlap").get<std::size_t>();
        source = j.value("source", source);
        for (const auto& s : j.at("sequences")) {
            windows.push_back(io::sequence_from_json(s));
        }
    }
    events::SplitFractions fr;
    if (!a.fractions.empty()) {
        fr = {a.fractions[0], a.fractions[1], a.fractions[2]};
    }
    auto ds = events::split_dataset(std::move(windows), fr, rc.data.seed);
    ds.d = rc.data.d;
    io::Manifest m;
    m.d = rc.data.d;
    m.n_in = rc.data.input_length;
    m.l_out = rc.data.output_length;
    m.seq_len = rc.data.seq_len;
    m.overlap = rc.data.overlap;
    m.seed = rc.data.seed;
    m.stats = ds.stats;
    m.source = source;
    io::save_dataset(a.output, ds, m);
    out << json{{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}, {"output", a.output}}
               .dump()
        << '\n';
}

// ------------------------------------------------------------ baselines

struct BaselineArgs {
    std::string data;
    std::string model;
    std::size_t clusters{15};
    std::uint64_t seed{0};
    std::string output;
};

pipeline::BaselineFitConfig fit_config(std::size_t clusters, std::uint64_t seed) {
    pipeline::BaselineFitConfig cfg;
    cfg.clusters = clusters;
    cfg.kcluster.seed = seed;
    return cfg;
}

json fit_baseline_json(pipeline::BaselineKind kind, const events::SequenceDataset& ds,
                       const pipeline::BaselineFitConfig& cfg) {
    json j = pipeline::is_temporal(kind) ? io::to_json(pipeline::fit_temporal(kind, ds.train, cfg))
                                         : io::to_json(pipeline::fit_space(kind, ds.train, cfg));
    j["baseline"] = pipeline::to_string(kind);
    return j;
}

void cmd_fit_baseline(const BaselineArgs& a, std::ostream& out) {
    require_dir(a.data, "dataset");
    const auto kind = pipeline::baseline_kind_from_string(a.model);
    const auto ds = io::load_dataset(a.data);
    const json j = fit_baseline_json(kind, ds.normalized, fit_config(a.clusters, a.seed));
    const std::string path = a.output.empty() ? (fs::path(a.data) / ("baseline-" + a.model + ".json")).string()
                                              : a.output;
    write_text(path, j.dump(2) + "\n");
    out << json{{"baseline", a.model}, {"output", path}}.dump() << '\n';
}

// ------------------------------------------------------------ evaluate

struct EvaluateArgs {
    std::string data;
    std::string split{"test"};
    std::string ckpt;
    std::string model;
    std::string space_model;
    std::string time_source{"true"};
    std::string ablation{"none"};
    std::size_t samples{1000};
    std::size_t clusters{15};
    std::uint64_t seed{0};
    std::string output;
};

/// A kind name is fitted on the training split; an existing file is loaded.
json resolve_baseline(const std::string& spec, const events::SequenceDataset& ds, std::size_t clusters,
                      std::uint64_t seed) {
    if (fs::exists(spec)) {
        return io::read_json(spec);
    }
    return fit_baseline_json(pipeline::baseline_kind_from_string(spec), ds, fit_config(clusters, seed));
}

void add_baseline(classical::BaselineModels& models, const json& j, const std::string& spec) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gmm-pairwise" || kind == "gmm-kcluster") {
        if (models.space) {
            throw CommandError("usage", "two spatial baselines given (" + spec + ")", 2);
        }
        models.space = io::space_model_from_json(j);
    } else {
        if (models.time) {
            throw CommandError("usage", "two temporal baselines given (" + spec + ")", 2);
        }
        models.time = io::temporal_params_from_json(j);
    }
}

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    train::EvalResult res;
    std::string label;
    bool has_time = true, has_space = true;
    if (!a.ckpt.empty()) {
        if (!a.model.empty() || !a.space_model.empty()) {
            throw CommandError("usage", "--ckpt cannot be combined with --model/--space-model", 2);
        }
        const auto md = load_model_and_data(a.ckpt, a.data);
        train::EvalConfig ec;
        ec.time_source = train::time_source_from_string(a.time_source);
        ec.ablation = train::ablation_from_string(a.ablation);
        ec.samples = a.samples;
        ec.seed = a.seed;
        res = train::evaluate(md.loaded.model, split_of(md.normalized, a.split), ec);
        label = "network";
        if (ec.ablation != train::Ablation::none) {
            label += " (" + a.ablation + ")";
        }
    } else {
        if (a.model.empty() && a.space_model.empty()) {
            throw CommandError("usage", "give --ckpt, or --model and/or --space-model", 2);
        }
        require_dir(a.data, "dataset");
        const auto ds = io::load_dataset(a.data);
        classical::BaselineModels models;
        std::vector<std::string> names;
        for (const auto* spec : {&a.model, &a.space_model}) {
            if (spec->empty()) {
                continue;
            }
            const json j = resolve_baseline(*spec, ds.normalized, a.clusters, a.seed);
            add_baseline(models, j, *spec);
            names.push_back(j.value("baseline", j.at("kind").get<std::string>()));
        }
        has_time = models.time.has_value();
        has_space = models.space.has_value();
        res = pipeline::evaluate_baseline(models, split_of(ds.normalized, a.split));
        for (std::size_t i = 0; i < names.size(); ++i) {
            label += (i ? "+" : "") + names[i];
        }
    }
    if (has_time) {
        require_finite(res.time.mean, "nll_time");
        require_finite(res.time.std, "nll_time std");
    }
    if (has_space) {
        require_finite(res.space.mean, "nll_space");
        require_finite(res.space.std, "nll_space std");
    }
    out << "model, nll_time, nll_space, nll_joint\n";
    out << label << ", " << (has_time ? pm(res.time) : "n/a") << ", " << (has_space ? pm(res.space) : "n/a") << ", "
        << pm(res.joint) << '\n';
    if (!a.output.empty()) {
        json j = {{"model", label},
                  {"split", a.split},
                  {"sequences", res.per_sequence_time.size()},
                  {"nll_joint", mean_std_json(res.joint)},
                  {"per_sequence", {{"time", res.per_sequence_time}, {"space", res.per_sequence_space}}}};
        j["nll_time"] = has_time ? mean_std_json(res.time) : json();
        j["nll_space"] = has_space ? mean_std_json(res.space) : json();
        write_text(a.output, j.dump(2) + "\n");
    }
}

// ------------------------------------------------------------ train

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out_dir;
    std::optional<std::string> ablation, time_flow;
    std::optional<std::size_t> epochs, batch_size;
    std::optional<double> lr, dropout;
    std::optional<std::uint64_t> seed;
    bool verbose{false};
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
    json j = load_config(a.config);
    override_opt(j, "train", "ablation", a.ablation);
    override_opt(j, "train", "epochs", a.epochs);
    override_opt(j, "train", "batch_size", a.batch_size);
    override_opt(j, "train", "learning_rate", a.lr);
    override_opt(j, "train", "seed", a.seed);
    override_opt(j, "model", "dropout", a.dropout);
    override_opt(j, "model", "time_flow", a.time_flow);
    if (!a.data.empty()) {
        set_override(j, "paths", "data", a.data);
    }
    if (!a.out_dir.empty()) {
        set_override(j, "paths", "out", a.out_dir);
    }
    const std::string data_dir = j.contains("paths") ? j["paths"].value("data", "") : "";
    require_dir(data_dir, "dataset");
    const auto ds = io::load_dataset(data_dir);
    const auto& m = ds.manifest;
    // Shape keys absent from the config come from the dataset manifest.
    const json shape = {{"d", m.d}, {"seq_len", m.seq_len}, {"input_length", m.n_in},
                        {"output_length", m.l_out}, {"overlap", m.overlap}};
    for (const auto& [key, value] : shape.items()) {
        if (!j.contains("data") || !j["data"].contains(key)) {
            set_override(j, "data", key, value);
        }
    }
    RunConfig rc = parse_run_config(j);
    std::vector<std::string> mismatch;
    if (rc.data.d != m.d) {
        mismatch.push_back("data.d = " + std::to_string(rc.data.d) + " but the dataset has d = " +
                           std::to_string(m.d));
    }
    if (rc.data.input_length != m.n_in) {
        mismatch.push_back("data.input_length = " + std::to_string(rc.data.input_length) +
                           " but the dataset has " + std::to_string(m.n_in));
    }
    if (rc.data.output_length != m.l_out) {
        mismatch.push_back("data.output_length = " + std::to_string(rc.data.output_length) +
                           " but the dataset has " + std::to_string(m.l_out));
    }
    if (!mismatch.empty()) {
        throw ConfigError(mismatch);
    }

    const fs::path out_dir = rc.paths.out;
    fs::create_directories(out_dir);
    rc.train.log_path = out_dir / "log.csv";
    rc.train.verbose = a.verbose;
    train::Model model = train::init_model(rc.net, rc.train.seed);
    const auto res = train::train(model, ds.normalized.train, ds.normalized.val, rc.train);

    const fs::path ckpt = out_dir / "best.stpp1";
    train::save_model(ckpt, model, ds.manifest.stats,
                      {{"best_epoch", res.best_epoch}, {"best_val", res.best_val}, {"config", j}});
    const double last_val = res.history.back().val_loss;
    const json summary = {{"best_val", res.best_val},
                          {"best_epoch", res.best_epoch},
                          {"epochs_run", res.history.size() - 1},
                          {"initial_val", res.history.front().val_loss},
                          {"last_val", last_val},
                          {"aborted", res.aborted},
                          {"abort_reason", res.abort_reason},
                          {"ablation", train::to_string(rc.train.ablation)},
                          {"checkpoint", ckpt.string()},
                          {"log", rc.train.log_path->string()}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    if (res.aborted) {
        throw CommandError("training", "training stopped early: " + res.abort_reason);
    }
    require_finite(last_val, "last validation loss");
    require_finite(res.best_val, "best validation loss");
    out << summary.dump() << '\n';
}

// ------------------------------------------------------------ predict / export

struct PredictArgs {
    std::string ckpt;
    std::string data;
    std::string seq{"test_0"};
    std::optional<std::string> time_source;
    std::size_t samples{1000};
    std::uint64_t seed{0};
    std::string output;
};

void cmd_predict(const PredictArgs& a, std::ostream& out) {
    const auto md = load_model_and_data(a.ckpt, a.data);
    const auto [norm, raw] = find_sequence(md, a.seq);
    train::EvalConfig ec;
    ec.time_source = a.time_source ? train::time_source_from_string(*a.time_source) : train::TimeSource::true_times;
    ec.samples = a.samples;
    ec.seed = a.seed;
    const auto p = train::predict(md.loaded.model, *norm, md.loaded.stats, ec);
    for (double t : p.t_hat) {
        require_finite(t, "predicted time");
    }
    for (const auto& x : p.x_hat) {
        for (double v : x) {
            require_finite(v, "predicted location");
        }
    }
    json j = train::to_json(p);
    j["sequence"] = a.seq;
    json truth = json::array();
    for (std::size_t i = raw->n_in; i < raw->size(); ++i) {
        truth.push_back({{"t", raw->events[i].t + raw->t0}, {"x", raw->events[i].x}});
    }
    j["truth"] = truth;
    j["time_source"] = train::to_string(ec.time_source);
    write_or_print(a.output, j, out);
}

struct DensityArgs {
    std::string ckpt;
    std::string data;
    std::string seq{"test_0"};
    std::size_t steps{100};
    double sigmas{6.0};
    std::vector<double> bounds;
    std::optional<double> depth;
    std::size_t samples{2000};
    std::uint64_t seed{0};
    std::string time_source{"true"};
    bool no_differences{false};
    std::string output;
};

void cmd_export_density(const DensityArgs& a, std::ostream& out) {
    const auto md = load_model_and_data(a.ckpt, a.data);
    const auto [norm, raw] = find_sequence(md, a.seq);
    train::GridConfig gc;
    gc.steps = a.steps;
    gc.sigmas = a.sigmas;
    if (!a.bounds.empty()) {
        gc.bounds = std::array<double, 4>{a.bounds[0], a.bounds[1], a.bounds[2], a.bounds[3]};
    }
    gc.depth = a.depth;
    gc.samples = a.samples;
    gc.seed = a.seed;
    gc.time_source = train::time_source_from_string(a.time_source);
    gc.differences = !a.no_differences;
    json j = train::export_density(md.loaded.model, *norm, md.loaded.stats, gc);
    for (const auto& slot : j.at("slots")) {
        for (const auto& v : slot.at("logp")) {
            if (!v.is_number() || !std::isfinite(v.get<double>())) {
                throw CommandError("non-finite", "density grid contains non-finite values");
            }
        }
    }
    j["meta"]["sequence"] = a.seq;
    write_or_print(a.output, j, out);
}

json error_json(const std::string& type, const std::string& message,
                const std::vector<std::string>& problems = {}) {
    json e = {{"type", type}, {"message", message}};
    if (!problems.empty()) {
        e["problems"] = problems;
    }
    return {{"error", e}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatio-temporal point process simulation, baselines and transformer forecasting", "stpp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "stpp 0.1.0");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate an event sequence and write it as CSV");
    c_sim->add_option("kind", sim.kind, "pinwheel, hawkes, poisson or self-correcting")->required();
    c_sim->add_option("--config", sim.config, "TOML or JSON config");
    c_sim->add_option("--clusters", sim.clusters, "Pinwheel arms");
    c_sim->add_option("--per-cluster", sim.per_cluster, "Events per pinwheel arm");
    c_sim->add_option("--radial-std", sim.radial_std);
    c_sim->add_option("--tangential-std", sim.tangential_std);
    c_sim->add_option("--rate", sim.rate, "Pinwheel spiral rate");
    c_sim->add_option("--mu", sim.mu);
    c_sim->add_option("--alpha", sim.alpha);
    c_sim->add_option("--beta", sim.beta);
    c_sim->add_option("--lambda", sim.lambda, "Poisson rate")->capture_default_str();
    c_sim->add_option("-n,--count", sim.n, "Number of events");
    c_sim->add_option("--horizon", sim.horizon, "Simulate on (0, horizon]");
    c_sim->add_option("-d,--dim", sim.d, "Spatial dimension of temporal-only output")->capture_default_str();
    c_sim->add_option("--seed", sim.seed);
    c_sim->add_option("-o,--output", sim.output, "CSV path (stdout when omitted)");

    WindowArgs ing;
    auto* c_ing = app.add_subcommand("ingest", "Cut an event CSV into overlapping windows");
    WindowArgs spl;
    auto* c_spl = app.add_subcommand("split", "Split windows (JSON or CSV) into train/val/test");
    for (auto [cmd, w] : {std::pair{c_ing, &ing}, std::pair{c_spl, &spl}}) {
        cmd->add_option("-i,--input", w->input, "Event CSV or windows JSON")->required();
        cmd->add_option("--config", w->config, "TOML or JSON config");
        cmd->add_option("-d,--dim", w->d);
        cmd->add_option("--seq-len", w->seq_len);
        cmd->add_option("--input-length", w->input_length);
        cmd->add_option("--output-length", w->output_length);
        cmd->add_option("--overlap", w->overlap);
        cmd->add_option("-o,--output", w->output);
    }
    c_spl->add_option("--seed", spl.seed, "Shuffle seed");
    c_spl->add_option("--fractions", spl.fractions, "train val test")->expected(3);

    BaselineArgs fit;
    auto* c_fit = app.add_subcommand("fit-baseline", "Fit a classical baseline on the training split");
    c_fit->add_option("--data", fit.data, "Dataset directory")->required();
    c_fit->add_option("--model", fit.model,
                      "homo-poisson, hawkes, self-correcting, gmm-pairwise, gmm-kcluster or gaussian")
        ->required();
    c_fit->add_option("--clusters", fit.clusters, "Components of gmm-kcluster")->capture_default_str();
    c_fit->add_option("--seed", fit.seed);
    c_fit->add_option("-o,--output", fit.output);

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the transformer on a dataset directory");
    c_tr->add_option("--config", tr.config, "TOML or JSON config");
    c_tr->add_option("--data", tr.data, "Dataset directory");
    c_tr->add_option("--out", tr.out_dir, "Run directory");
    c_tr->add_option("--ablation", tr.ablation, "none, zero-encoder or zero-decoder");
    c_tr->add_option("--time-flow", tr.time_flow, "softsign or softplus");
    c_tr->add_option("--epochs", tr.epochs);
    c_tr->add_option("--batch-size", tr.batch_size);
    c_tr->add_option("--lr", tr.lr);
    c_tr->add_option("--dropout", tr.dropout);
    c_tr->add_option("--seed", tr.seed);
    c_tr->add_flag("-v,--verbose", tr.verbose);

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Test-protocol NLL per half and joint");
    c_ev->add_option("--data", ev.data, "Dataset directory")->required();
    c_ev->add_option("--split", ev.split)->capture_default_str();
    c_ev->add_option("--ckpt", ev.ckpt, "Network checkpoint");
    c_ev->add_option("--model", ev.model, "Baseline name or fitted baseline JSON");
    c_ev->add_option("--space-model", ev.space_model, "Spatial baseline name or fitted baseline JSON");
    c_ev->add_option("--time-source", ev.time_source, "true or sampled")->capture_default_str();
    c_ev->add_option("--ablation", ev.ablation)->capture_default_str();
    c_ev->add_option("--samples", ev.samples)->capture_default_str();
    c_ev->add_option("--clusters", ev.clusters)->capture_default_str();
    c_ev->add_option("--seed", ev.seed);
    c_ev->add_option("-o,--output", ev.output, "Result JSON");

    PredictArgs pr;
    auto* c_pr = app.add_subcommand("predict", "Predict the output events of one sequence");
    c_pr->add_option("--ckpt", pr.ckpt)->required();
    c_pr->add_option("--data", pr.data, "Dataset directory");
    c_pr->add_option("--seq", pr.seq, "Sequence id such as test_0")->capture_default_str();
    c_pr->add_option("--time-source", pr.time_source, "true or sampled");
    c_pr->add_option("--samples", pr.samples)->capture_default_str();
    c_pr->add_option("--seed", pr.seed);
    c_pr->add_option("-o,--output", pr.output);

    DensityArgs de;
    auto* c_de = app.add_subcommand("export-density", "Spatial density grids of one sequence's output slots");
    c_de->add_option("--ckpt", de.ckpt)->required();
    c_de->add_option("--data", de.data, "Dataset directory");
    c_de->add_option("--seq", de.seq)->capture_default_str();
    c_de->add_option("--steps", de.steps)->capture_default_str();
    c_de->add_option("--sigmas", de.sigmas)->capture_default_str();
    c_de->add_option("--bounds", de.bounds, "x1_min x1_max x2_min x2_max")->expected(4);
    c_de->add_option("--depth", de.depth);
    c_de->add_option("--samples", de.samples)->capture_default_str();
    c_de->add_option("--seed", de.seed);
    c_de->add_option("--time-source", de.time_source)->capture_default_str();
    c_de->add_flag("--no-differences", de.no_differences);
    c_de->add_option("-o,--output", de.output);

    // The predict/export commands fall back to the dataset in the checkpoint's
    // training config when --data is omitted.
    const auto data_from_ckpt = [](std::string& data, const std::string& ckpt) {
        if (!data.empty() || !fs::exists(ckpt)) {
            return;
        }
        const auto meta = ad::load_checkpoint(ckpt).meta;
        if (meta.contains("config") && meta["config"].contains("paths")) {
            data = meta["config"]["paths"].value("data", "");
        }
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "stpp 0.1.0\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_json("usage", e.what()).dump() << '\n';
        return 2;
    }

    try {
        if (c_sim->parsed()) {
            cmd_simulate(sim, out);
        } else if (c_ing->parsed()) {
            cmd_ingest(ing, out);
        } else if (c_spl->parsed()) {
            cmd_split(spl, out);
        } else if (c_fit->parsed()) {
            cmd_fit_baseline(fit, out);
        } else if (c_tr->parsed()) {
            cmd_train(tr, out);
        } else if (c_ev->parsed()) {
            cmd_evaluate(ev, out);
        } else if (c_pr->parsed()) {
            data_from_ckpt(pr.data, pr.ckpt);
            cmd_predict(pr, out);
        } else if (c_de->parsed()) {
            data_from_ckpt(de.data, de.ckpt);
            cmd_export_density(de, out);
        }
    } catch (const ConfigError& e) {
        err << error_json("config", e.what(), e.problems()).dump() << '\n';
        return 2;
    } catch (const CommandError& e) {
        err << error_json(e.type(), e.what()).dump() << '\n';
        return e.code();
    } catch (const std::invalid_argument& e) {
        err << error_json("invalid-argument", e.what()).dump() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << error_json("runtime", e.what()).dump() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace stpp::cli
