#include "stpp/io.hpp"

#include <fstream>
#include <stdexcept>

namespace stpp::io {

using classical::GmmComponent;
using classical::GmmKClusterParams;
using classical::GmmPairwiseParams;
using classical::TemporalKind;
using classical::TemporalModelParams;

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

nlohmann::json to_json(const Manifest& m) {
    return {{"d", m.d},
            {"n_in", m.n_in},
            {"l_out", m.l_out},
            {"seq_len", m.seq_len},
            {"overlap", m.overlap},
            {"seed", m.seed},
            {"source", m.source},
            {"stats",
             {{"space_mean", m.stats.space_mean},
              {"space_var", m.stats.space_var},
              {"marker_mean", m.stats.marker_mean},
              {"marker_var", m.stats.marker_var},
              {"dt_max", m.stats.dt_max}}}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    m.d = j.at("d").get<std::size_t>();
    m.n_in = j.at("n_in").get<std::size_t>();
    m.l_out = j.at("l_out").get<std::size_t>();
    m.seq_len = j.at("seq_len").get<std::size_t>();
    m.overlap = j.at("overlap").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.source = j.value("source", std::string());
    const auto& s = j.at("stats");
    m.stats.space_mean = s.at("space_mean").get<std::vector<double>>();
    m.stats.space_var = s.at("space_var").get<std::vector<double>>();
    m.stats.marker_mean = s.at("marker_mean").get<double>();
    m.stats.marker_var = s.at("marker_var").get<double>();
    m.stats.dt_max = s.at("dt_max").get<double>();
    return m;
}

nlohmann::json to_json(const events::EventSequence& s) {
    nlohmann::json ev = nlohmann::json::array();
    for (const auto& e : s.events) {
        ev.push_back({{"t", e.t}, {"x", e.x}, {"m", e.m}});
    }
    return {{"t0", s.t0}, {"n_in", s.n_in}, {"l_out", s.l_out}, {"events", std::move(ev)}};
}

events::EventSequence sequence_from_json(const nlohmann::json& j) {
    events::EventSequence s;
    s.t0 = j.at("t0").get<double>();
    s.n_in = j.at("n_in").get<std::size_t>();
    s.l_out = j.at("l_out").get<std::size_t>();
    for (const auto& e : j.at("events")) {
        s.events.push_back(events::Event{e.at("t").get<double>(), e.at("x").get<std::vector<double>>(),
                                         e.at("m").get<double>()});
    }
    if (s.events.size() != s.n_in + s.l_out) {
        throw std::runtime_error("sequence length does not equal n_in + l_out");
    }
    return s;
}

namespace {

nlohmann::json split_json(const std::vector<events::EventSequence>& seqs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : seqs) {
        arr.push_back(to_json(s));
    }
    return arr;
}

std::vector<events::EventSequence> split_from_json(const nlohmann::json& j) {
    std::vector<events::EventSequence> out;
    for (const auto& s : j) {
        out.push_back(sequence_from_json(s));
    }
    return out;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const events::SequenceDataset& raw, const Manifest& manifest) {
    std::filesystem::create_directories(dir);
    write_json(dir / "manifest.json", to_json(manifest));
    write_json(dir / "train.json", split_json(raw.train));
    write_json(dir / "val.json", split_json(raw.val));
    write_json(dir / "test.json", split_json(raw.test));
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("dataset directory not found: " + dir.string());
    }
    LoadedDataset out;
    out.manifest = manifest_from_json(read_json(dir / "manifest.json"));
    out.raw.d = out.manifest.d;
    out.raw.stats = out.manifest.stats;
    out.raw.train = split_from_json(read_json(dir / "train.json"));
    out.raw.val = split_from_json(read_json(dir / "val.json"));
    out.raw.test = split_from_json(read_json(dir / "test.json"));
    out.normalized = events::normalize(out.raw);
    return out;
}

nlohmann::json to_json(const TemporalModelParams& p) {
    nlohmann::json params;
    switch (p.kind) {
        case TemporalKind::poisson:
            params = {{"rate", p.rate}};
            break;
        case TemporalKind::hawkes:
        case TemporalKind::self_correcting:
            params = {{"mu", p.mu}, {"alpha", p.alpha}, {"beta", p.beta}};
            break;
    }
    return {{"kind", classical::to_string(p.kind)}, {"params", params}};
}

nlohmann::json to_json(const classical::FitResult& fit) {
    auto j = to_json(fit.params);
    j["fit_meta"] = {{"nll", fit.nll}, {"iters", fit.iters}, {"converged", fit.converged}};
    return j;
}

TemporalModelParams temporal_params_from_json(const nlohmann::json& j) {
    const auto kind = classical::temporal_kind_from_string(j.at("kind").get<std::string>());
    const auto& p = j.at("params");
    TemporalModelParams out;
    switch (kind) {
        case TemporalKind::poisson:
            out = TemporalModelParams::poisson(p.at("rate").get<double>());
            break;
        case TemporalKind::hawkes:
            out = TemporalModelParams::hawkes(p.at("mu").get<double>(), p.at("alpha").get<double>(),
                                              p.at("beta").get<double>());
            break;
        case TemporalKind::self_correcting:
            out = TemporalModelParams::self_correcting(p.at("mu").get<double>(), p.at("alpha").get<double>(),
                                                       p.at("beta").get<double>());
            break;
    }
    return out;
}

nlohmann::json to_json(const classical::SpaceModel& m) {
    if (const auto* pw = std::get_if<GmmPairwiseParams>(&m)) {
        return {{"kind", "gmm-pairwise"}, {"params", {{"scales", pw->scales}, {"gamma", pw->gamma}}}};
    }
    const auto& k = std::get<GmmKClusterParams>(m);
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : k.components) {
        comps.push_back({{"mean", c.mean}, {"cov", c.cov}, {"weight", c.weight}});
    }
    return {{"kind", "gmm-kcluster"}, {"params", {{"d", k.d}, {"components", comps}}}};
}

classical::SpaceModel space_model_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("params");
    if (kind == "gmm-pairwise") {
        GmmPairwiseParams out{p.at("scales").get<std::vector<double>>(), p.at("gamma").get<double>()};
        out.validate();
        return out;
    }
    if (kind == "gmm-kcluster") {
        GmmKClusterParams out;
        out.d = p.at("d").get<std::size_t>();
        for (const auto& c : p.at("components")) {
            out.components.push_back(GmmComponent{c.at("mean").get<std::vector<double>>(),
                                                  c.at("cov").get<std::vector<double>>(),
                                                  c.at("weight").get<double>()});
        }
        return out;
    }
    throw std::invalid_argument("unknown space model kind '" + kind + "'");
}

}  // namespace stpp::io
