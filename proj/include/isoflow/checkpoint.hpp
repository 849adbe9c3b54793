#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "isoflow/embed.hpp"
#include "isoflow/flow.hpp"

namespace isoflow::checkpoint {

using Json = nlohmann::json;

inline constexpr const char* format_name = "isoflow-checkpoint";
inline constexpr int format_version = 1;

// Matrices are stored as {"rows", "cols", "data"} with row-major data.
// Doubles are written in shortest round-trip form, so reading a checkpoint
// back reproduces every value bit for bit.
Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const MlpSpec& spec, const MlpParams& params);
std::pair<MlpSpec, MlpParams> mlp_from_json(const Json& j);

Json to_json(const embed::PcaEmbedding& e);
Json to_json(const embed::IaeModel& m);
Json to_json(const embed::Embedding& e);
Json to_json(const flow::CouplingFlow& f);

// Takes the whole enveloped document; its kind selects PCA or I-AE.
embed::Embedding embedding_from_json(const Json& doc);
// Takes the payload of a "flow" envelope.
flow::CouplingFlow flow_from_json(const Json& j);

// Wraps a payload with the format header and `kind` ("pca", "iae" or "flow").
Json envelope(const std::string& kind, Json payload);
// Checks the header and returns the payload. Throws on a different kind.
Json open_envelope(const Json& doc, const std::string& expected_kind);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& doc);

void save_embedding(const std::filesystem::path& path, const embed::Embedding& e);
embed::Embedding load_embedding(const std::filesystem::path& path);
void save_flow(const std::filesystem::path& path, const flow::CouplingFlow& f);
flow::CouplingFlow load_flow(const std::filesystem::path& path);

}  // namespace isoflow::checkpoint
