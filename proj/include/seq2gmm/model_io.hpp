#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "seq2gmm/dataio.hpp"
#include "seq2gmm/trainer.hpp"

namespace seq2gmm {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);

/// Writes the model as JSON. Doubles are printed in shortest round-trip form, so reloading is bit-exact.
void save_model(const std::filesystem::path& path, const TrainedModel& model);
/// Throws std::runtime_error naming the path when it cannot be read, ArgumentError on a malformed file.
TrainedModel load_model(const std::filesystem::path& path);

/// Hex SHA-256 over the dataset's ids, labels and sample bytes in order.
std::string dataset_fingerprint(const Dataset& dataset);

/// `<model path>.meta.json`
std::filesystem::path sidecar_path(const std::filesystem::path& model_path);

void save_sidecar(const std::filesystem::path& path, const TrainingConfig& config, const TrainingTrace& trace,
                  const std::string& fingerprint, const nlohmann::json& extra = nlohmann::json::object());

}  // namespace seq2gmm
