#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "akmpc/ident.hpp"
#include "akmpc/ingest.hpp"
#include "akmpc/lifting.hpp"

namespace akmpc {

/// Everything needed to reuse a fitted model: dictionary, estimate and the training-split statistics.
struct ModelFile {
    Dictionary dictionary = Dictionary::polynomial(3, 2);
    LiftedModel model;
    std::vector<std::string> state_names;
    std::vector<std::string> input_names;
    std::optional<Scaler> scaler;
    std::optional<InputEnvelope> envelope;
};

inline constexpr const char* kModelFormat = "akmpc-model";
inline constexpr int kModelVersion = 1;

nlohmann::json model_to_json(const ModelFile& file);
ModelFile model_from_json(const nlohmann::json& j);

/// Doubles are written in shortest round-trip form, so load(save(m)) is bit-identical.
void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

/// Shared JSON helpers for Eigen objects (row-major nested arrays for matrices).
nlohmann::json to_json_vector(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
nlohmann::json to_json_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace akmpc
