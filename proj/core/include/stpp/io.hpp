#pragma once

#include "stpp/baseline.hpp"
#include "stpp/events.hpp"
#include "stpp/temporal.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stpp::io {

/// Dataset manifest written next to the serialized splits.
struct Manifest {
    std::size_t d{2};
    std::size_t n_in{0};
    std::size_t l_out{0};
    std::size_t seq_len{0};
    std::size_t overlap{0};
    std::uint64_t seed{0};
    events::NormStats stats;
    std::string source;
};

[[nodiscard]] nlohmann::json to_json(const Manifest& m);
[[nodiscard]] Manifest manifest_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const events::EventSequence& s);
[[nodiscard]] events::EventSequence sequence_from_json(const nlohmann::json& j);

/// Writes manifest.json and {train,val,test}.json (raw, unnormalized
/// sequences) into `dir`, creating it when needed.
void save_dataset(const std::filesystem::path& dir, const events::SequenceDataset& raw, const Manifest& manifest);

struct LoadedDataset {
    Manifest manifest;
    /// Raw sequences; stats taken from the manifest.
    events::SequenceDataset raw;
    /// Normalized with the manifest stats.
    events::SequenceDataset normalized;
};

[[nodiscard]] LoadedDataset load_dataset(const std::filesystem::path& dir);

/// `{kind, params:{...}, fit_meta:{nll, iters, converged}}`
[[nodiscard]] nlohmann::json to_json(const classical::FitResult& fit);
[[nodiscard]] nlohmann::json to_json(const classical::TemporalModelParams& p);
[[nodiscard]] classical::TemporalModelParams temporal_params_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const classical::SpaceModel& m);
[[nodiscard]] classical::SpaceModel space_model_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace stpp::io
