#pragma once

#include "stpp/neural.hpp"
#include "stpp/simulate.hpp"
#include "stpp/train.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stpp::cli {

/// Raised with every problem found in a configuration.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> problems);
    [[nodiscard]] const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct DataConfig {
    std::size_t d{2};
    std::size_t seq_len{60};
    std::size_t input_length{57};
    std::size_t output_length{3};
    std::size_t overlap{58};
    std::uint64_t seed{0};
};

struct SimulateConfig {
    simulate::PinwheelConfig pinwheel{};
    double mu{0.5};
    double alpha{0.5};
    double beta{1.0};
    std::uint64_t seed{0};
};

struct PathsConfig {
    std::string data;
    std::string out{"run"};
};

struct BaselineConfig {
    double lambda1{0.1};
    double lambda2{0.1};
};

/// Everything a config file can set. Sections: data, model, train,
/// baseline, simulate, paths.
struct RunConfig {
    DataConfig data{};
    neural::NetConfig net{};
    train::TrainConfig train{};
    BaselineConfig baseline{};
    SimulateConfig simulate{};
    PathsConfig paths{};
};

/// TOML (by extension .toml) or JSON config file as a JSON object.
[[nodiscard]] nlohmann::json read_config_file(const std::filesystem::path& path);

/// Validates every key; unknown keys, wrong types and violated constraints
/// are all collected before throwing ConfigError.
[[nodiscard]] RunConfig parse_run_config(const nlohmann::json& j);

/// Sets j[section][key] = value, creating the section if needed.
void set_override(nlohmann::json& j, const std::string& section, const std::string& key, nlohmann::json value);

}  // namespace stpp::cli
