#include "stpp/params.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace stpp::ad {

namespace {

constexpr char kMagic[5] = {'S', 'T', 'P', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("checkpoint truncated");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return v;
}

}  // namespace

Param& ParamStore::add(std::string name, Array value, bool trainable) {
    if (name.empty()) {
        throw std::invalid_argument("parameter name must be nonempty");
    }
    if (contains(name)) {
        throw std::invalid_argument("duplicate parameter name " + name);
    }
    index_.emplace(name, params_.size());
    params_.push_back(Param{std::move(name), std::move(value), trainable});
    return params_.back();
}

Param& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("unknown parameter " + name);
    }
    return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("unknown parameter " + name);
    }
    return params_[it->second];
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

Var ParamStore::bind(Tape& tape, const std::string& name) const {
    const Param& p = get(name);
    return tape.named(p.name, p.value, p.trainable);
}

std::map<std::string, Array> ParamStore::complete(const std::map<std::string, Array>& grads) const {
    std::map<std::string, Array> out;
    for (const auto& p : params_) {
        if (!p.trainable) {
            continue;
        }
        auto it = grads.find(p.name);
        out[p.name] = it != grads.end() ? it->second : Array(p.value.shape());
    }
    return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i];
        const auto& b = other.params_[i];
        if (a.name != b.name || a.trainable != b.trainable || a.value.shape() != b.value.shape() ||
            std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

void write_checkpoint(std::ostream& out, const ParamStore& params, const nlohmann::json& meta) {
    nlohmann::json header;
    header["format"] = "STPP1";
    header["params"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& p : params.items()) {
        header["params"].push_back(
            {{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"trainable", p.trainable}});
        offset += p.value.size();
    }
    header["meta"] = meta;
    const std::string text = header.dump();
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params.items()) {
        for (double v : p.value.values()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) {
        throw std::runtime_error("failed to write checkpoint");
    }
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& meta) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    }
    write_checkpoint(out, params, meta);
}

Checkpoint read_checkpoint(std::istream& in) {
    char magic[sizeof(kMagic)];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not an STPP1 checkpoint (bad magic)");
    }
    const std::uint64_t len = get_u64(in);
    if (len > (std::uint64_t{1} << 32)) {
        throw std::runtime_error("checkpoint header length is implausible");
    }
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        throw std::runtime_error("checkpoint header truncated");
    }
    const auto header = nlohmann::json::parse(text);
    Checkpoint ck;
    ck.meta = header.value("meta", nlohmann::json::object());
    std::uint64_t expected = 0;
    for (const auto& entry : header.at("params")) {
        const auto shape = entry.at("shape").get<Shape>();
        if (entry.at("offset").get<std::uint64_t>() != expected) {
            throw std::runtime_error("checkpoint offsets are not contiguous");
        }
        Array value(shape);
        for (auto& v : value.values()) {
            v = std::bit_cast<double>(get_u64(in));
        }
        expected += value.size();
        ck.params.add(entry.at("name").get<std::string>(), std::move(value), entry.at("trainable").get<bool>());
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    }
    return read_checkpoint(in);
}

}  // namespace stpp::ad
