#include "config.hpp"

#include <toml.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stpp::cli {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = "invalid configuration (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() == 1 ? "" : "s") + "):";
    for (const auto& p : problems) {
        msg += "\n  - " + p;
    }
    return msg;
}

/// Typed access to one config section that records problems instead of
/// throwing.
class Section {
public:
    Section(const nlohmann::json& root, std::string name, std::vector<std::string>& problems)
        : name_(std::move(name)), problems_(problems) {
        if (root.contains(name_)) {
            if (!root.at(name_).is_object()) {
                problems_.push_back("[" + name_ + "] must be a table");
            } else {
                section_ = root.at(name_);
            }
        }
    }

    ~Section() {
        for (const auto& [key, value] : section_.items()) {
            if (!used_.count(key)) {
                problems_.push_back("unknown key " + name_ + "." + key);
            }
        }
    }

    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    void size(const std::string& key, std::size_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) {
                problems_.push_back(name_ + "." + key + " must be a nonnegative integer");
            } else {
                out = v->get<std::size_t>();
            }
        }
    }

    void u64(const std::string& key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) {
                problems_.push_back(name_ + "." + key + " must be a nonnegative integer");
            } else {
                out = v->get<std::uint64_t>();
            }
        }
    }

    void real(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number() || !std::isfinite(v->get<double>())) {
                problems_.push_back(name_ + "." + key + " must be a finite number");
            } else {
                out = v->get<double>();
            }
        }
    }

    template <typename Parse>
    void text(const std::string& key, Parse&& parse) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) {
                problems_.push_back(name_ + "." + key + " must be a string");
                return;
            }
            try {
                parse(v->get<std::string>());
            } catch (const std::invalid_argument& e) {
                problems_.push_back(name_ + "." + key + ": " + e.what());
            }
        }
    }

private:
    const nlohmann::json* find(const std::string& key) {
        used_.insert(key);
        auto it = section_.find(key);
        return it == section_.end() ? nullptr : &*it;
    }

    std::string name_;
    std::vector<std::string>& problems_;
    nlohmann::json section_ = nlohmann::json::object();
    std::set<std::string> used_;
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

nlohmann::json read_config_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("config file not found: " + path.string());
    }
    if (path.extension() == ".toml") {
        toml::table tbl;
        try {
            tbl = toml::parse_file(path.string());
        } catch (const toml::parse_error& e) {
            std::ostringstream os;
            os << "malformed TOML in " << path.string() << ": " << e.description() << " at line "
               << e.source().begin.line;
            throw ConfigError({os.str()});
        }
        std::ostringstream os;
        os << toml::json_formatter{tbl};
        return nlohmann::json::parse(os.str());
    }
    std::ifstream in(path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError({"malformed JSON in " + path.string() + ": " + e.what()});
    }
}

void set_override(nlohmann::json& j, const std::string& section, const std::string& key, nlohmann::json value) {
    if (!j.is_object()) {
        j = nlohmann::json::object();
    }
    j[section][key] = std::move(value);
}

RunConfig parse_run_config(const nlohmann::json& j) {
    std::vector<std::string> problems;
    RunConfig rc;
    if (!j.is_object()) {
        throw ConfigError({"configuration root must be a table/object"});
    }
    static const std::set<std::string> sections{"data", "model", "train", "baseline", "simulate", "paths"};
    for (const auto& [key, value] : j.items()) {
        if (!sections.count(key)) {
            problems.push_back("unknown section [" + key + "]");
        }
    }
    {
        Section s(j, "data", problems);
        s.size("d", rc.data.d);
        s.size("seq_len", rc.data.seq_len);
        s.size("input_length", rc.data.input_length);
        s.size("output_length", rc.data.output_length);
        s.size("overlap", rc.data.overlap);
        s.u64("seed", rc.data.seed);
    }
    {
        Section s(j, "model", problems);
        s.size("d_model", rc.net.d_model);
        s.size("attention_layers", rc.net.n_layers);
        s.size("attention_heads", rc.net.n_heads);
        s.size("head_dim", rc.net.head_dim);
        s.size("ff_mult", rc.net.ff_mult);
        s.real("dropout", rc.net.dropout);
        s.text("time_flow", [&](const std::string& v) { rc.net.time_flow = neural::time_flow_from_string(v); });
        s.size("flow_layers", rc.net.flow_layers);
        s.size("flow_hidden", rc.net.flow_hidden);
        s.size("head_hidden", rc.net.head_hidden);
    }
    {
        Section s(j, "train", problems);
        s.size("epochs", rc.train.epochs);
        s.size("batch_size", rc.train.batch_size);
        s.real("learning_rate", rc.train.lr0);
        s.size("patience", rc.train.schedule.patience);
        s.real("decay_factor", rc.train.schedule.factor);
        s.real("min_lr", rc.train.schedule.min_lr);
        s.u64("seed", rc.train.seed);
        s.real("clip_norm", rc.train.clip_norm);
        s.text("ablation", [&](const std::string& v) { rc.train.ablation = train::ablation_from_string(v); });
        s.text("time_source",
               [&](const std::string& v) { rc.train.time_source = train::time_source_from_string(v); });
    }
    {
        Section s(j, "baseline", problems);
        s.real("lambda1", rc.baseline.lambda1);
        s.real("lambda2", rc.baseline.lambda2);
    }
    {
        Section s(j, "simulate", problems);
        s.size("clusters", rc.simulate.pinwheel.n_clusters);
        s.size("per_cluster", rc.simulate.pinwheel.per_cluster);
        s.real("radial_std", rc.simulate.pinwheel.radial_std);
        s.real("tangential_std", rc.simulate.pinwheel.tangential_std);
        s.real("rate", rc.simulate.pinwheel.rate);
        s.real("mu", rc.simulate.mu);
        s.real("alpha", rc.simulate.alpha);
        s.real("beta", rc.simulate.beta);
        s.u64("seed", rc.simulate.seed);
    }
    {
        Section s(j, "paths", problems);
        s.text("data", [&](const std::string& v) { rc.paths.data = v; });
        s.text("out", [&](const std::string& v) { rc.paths.out = v; });
    }

    // Cross-field constraints.
    const auto& d = rc.data;
    if (d.d < 2 || d.d > 3) {
        problems.push_back("data.d must be 2 or 3");
    }
    if (d.input_length + d.output_length != d.seq_len) {
        problems.push_back("data.input_length (" + std::to_string(d.input_length) + ") + data.output_length (" +
                           std::to_string(d.output_length) + ") must equal data.seq_len (" +
                           std::to_string(d.seq_len) + ")");
    }
    if (d.input_length == 0 || d.output_length == 0) {
        problems.push_back("data.input_length and data.output_length must be positive");
    }
    if (d.overlap >= d.seq_len) {
        problems.push_back("data.overlap must be smaller than data.seq_len");
    }
    rc.net.d_space = d.d;
    rc.net.n_in = d.input_length;
    rc.net.l_out = d.output_length;
    try {
        rc.net.validate();
    } catch (const std::invalid_argument& e) {
        std::istringstream is(e.what());
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            problems.push_back("model: " + line.substr(line.find("- ") + 2));
        }
    }
    try {
        rc.train.validate();
    } catch (const std::invalid_argument& e) {
        std::istringstream is(e.what());
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line)) {
            problems.push_back("train: " + line.substr(line.find("- ") + 2));
        }
    }
    if (rc.baseline.lambda1 < 0.0 || rc.baseline.lambda2 < 0.0) {
        problems.push_back("baseline.lambda1 and baseline.lambda2 must be nonnegative");
    }
    try {
        rc.simulate.pinwheel.validate();
    } catch (const std::invalid_argument& e) {
        problems.push_back(std::string("simulate: ") + e.what());
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return rc;
}

}  // namespace stpp::cli
