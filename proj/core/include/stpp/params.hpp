#pragma once

#include "stpp/autodiff.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace stpp::ad {

struct Param {
    std::string name;
    Array value;
    bool trainable{true};
};

/// Ordered, uniquely named set of parameters.
class ParamStore {
public:
    /// Throws std::invalid_argument on a duplicate name.
    Param& add(std::string name, Array value, bool trainable = true);

    [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) != 0; }
    [[nodiscard]] Param& get(const std::string& name);
    [[nodiscard]] const Param& get(const std::string& name) const;

    [[nodiscard]] std::vector<Param>& items() { return params_; }
    [[nodiscard]] const std::vector<Param>& items() const { return params_; }
    [[nodiscard]] std::size_t size() const { return params_.size(); }
    /// Total number of scalar entries.
    [[nodiscard]] std::size_t count() const;

    /// Leaf for `name` on the tape (created on first use).
    [[nodiscard]] Var bind(Tape& tape, const std::string& name) const;

    /// Gradient map over every trainable parameter; entries missing from
    /// `grads` (unreachable from the loss) are zero.
    [[nodiscard]] std::map<std::string, Array> complete(const std::map<std::string, Array>& grads) const;

    [[nodiscard]] bool operator==(const ParamStore& other) const;

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Checkpoint container: magic "STPP1", a little-endian u64 header length,
/// a JSON header {params: [{name, shape, offset, trainable}], meta}, and the
/// values as little-endian f64 in header order.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const nlohmann::json& meta = nlohmann::json::object());
void write_checkpoint(std::ostream& out, const ParamStore& params, const nlohmann::json& meta);

struct Checkpoint {
    ParamStore params;
    nlohmann::json meta;
};

[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);
[[nodiscard]] Checkpoint read_checkpoint(std::istream& in);

}  // namespace stpp::ad
