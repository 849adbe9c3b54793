#include "isoflow/checkpoint.hpp"

#include <fstream>

namespace isoflow::checkpoint {

namespace {

// Wraps nlohmann accessors so malformed documents surface as library errors.
template <typename F>
auto guarded(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string(what) + ": malformed checkpoint: " + e.what());
  }
}

Json widths_json(const std::vector<Index>& widths) {
  Json j = Json::array();
  for (Index w : widths) j.push_back(w);
  return j;
}

}  // namespace

Json to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const Json& j) {
  return guarded("matrix", [&] {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    require(rows >= 0 && cols >= 0 && data.size() == static_cast<std::size_t>(rows * cols),
            ErrorCode::shape_mismatch, "matrix: data length does not match rows x cols");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    }
    return m;
  });
}

Json to_json(const MlpSpec& spec, const MlpParams& params) {
  Json acts = Json::array();
  for (Activation a : spec.activations) acts.push_back(to_string(a));
  Json layers = Json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    layers.push_back({{"weight", to_json(params.weights[l])}, {"bias", to_json(params.biases[l])}});
  }
  return {{"layer_widths", widths_json(spec.layer_widths)},
          {"activations", std::move(acts)},
          {"init_seed", spec.init_seed},
          {"layers", std::move(layers)}};
}

std::pair<MlpSpec, MlpParams> mlp_from_json(const Json& j) {
  return guarded("mlp", [&] {
    MlpSpec spec;
    spec.layer_widths = j.at("layer_widths").get<std::vector<Index>>();
    for (const auto& a : j.at("activations")) {
      spec.activations.push_back(activation_from_string(a.get<std::string>()));
    }
    spec.init_seed = j.at("init_seed").get<std::uint64_t>();
    spec.validate();
    MlpParams params;
    const auto& layers = j.at("layers");
    require(layers.size() == spec.layer_count(), ErrorCode::shape_mismatch,
            "mlp: layer count does not match the widths");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix w = matrix_from_json(layers[l].at("weight"));
      Matrix b = matrix_from_json(layers[l].at("bias"));
      require(w.rows() == spec.layer_widths[l] && w.cols() == spec.layer_widths[l + 1] &&
                  b.rows() == 1 && b.cols() == w.cols(),
              ErrorCode::shape_mismatch, "mlp: layer " + std::to_string(l) + " has shape " +
                                             shape_string(w) + " / " + shape_string(b));
      params.weights.push_back(std::move(w));
      params.biases.push_back(std::move(b));
    }
    return std::make_pair(std::move(spec), std::move(params));
  });
}

Json to_json(const embed::PcaEmbedding& e) {
  return {{"latent_dim", e.latent_dim},
          {"mean", to_json(e.mean)},
          {"basis", to_json(e.basis)},
          {"singular_values", to_json(Matrix(e.singular_values))}};
}

Json to_json(const embed::IaeModel& m) {
  return {{"encoder", to_json(m.encoder_spec, m.encoder)},
          {"decoder", to_json(m.decoder_spec, m.decoder)},
          {"lambda_iso", m.lambda_iso},
          {"lambda_piso", m.lambda_piso},
          {"reconstruction", embed::to_string(m.reconstruction)}};
}

Json to_json(const embed::Embedding& e) {
  return std::visit([](const auto& m) { return to_json(m); }, e);
}

Json to_json(const flow::CouplingFlow& f) {
  Json layers = Json::array();
  for (const auto& layer : f.layers) {
    Json mask = Json::array();
    for (bool b : layer.mask) mask.push_back(b ? 1 : 0);
    layers.push_back({{"mask", std::move(mask)},
                      {"scale_clamp", layer.scale_clamp},
                      {"scale_net", to_json(layer.net_spec, layer.scale_net)},
                      {"shift_net", to_json(layer.net_spec, layer.shift_net)}});
  }
  return {{"dim", f.dim}, {"layers", std::move(layers)}};
}

namespace {

embed::PcaEmbedding pca_from_json(const Json& j) {
  return guarded("pca", [&] {
    embed::PcaEmbedding e;
    e.latent_dim = j.at("latent_dim").get<Index>();
    const Matrix mean = matrix_from_json(j.at("mean"));
    e.basis = matrix_from_json(j.at("basis"));
    const Matrix sv = matrix_from_json(j.at("singular_values"));
    require(mean.rows() == 1 && sv.cols() == 1, ErrorCode::shape_mismatch,
            "pca: mean must be a row and singular values a column");
    e.mean = mean.row(0);
    e.singular_values = sv.col(0);
    require(e.basis.rows() == e.mean.size() && e.basis.cols() == e.latent_dim &&
                e.latent_dim >= 1,
            ErrorCode::shape_mismatch, "pca: basis shape " + shape_string(e.basis) +
                                           " does not match the mean and latent dimension");
    return e;
  });
}

embed::IaeModel iae_from_json(const Json& j) {
  return guarded("iae", [&] {
    embed::IaeModel m;
    std::tie(m.encoder_spec, m.encoder) = mlp_from_json(j.at("encoder"));
    std::tie(m.decoder_spec, m.decoder) = mlp_from_json(j.at("decoder"));
    m.lambda_iso = j.at("lambda_iso").get<double>();
    m.lambda_piso = j.at("lambda_piso").get<double>();
    m.reconstruction = embed::reconstruction_from_string(j.at("reconstruction").get<std::string>());
    m.validate();
    return m;
  });
}

}  // namespace

embed::Embedding embedding_from_json(const Json& j) {
  const std::string kind = guarded("embedding", [&] { return j.at("kind").get<std::string>(); });
  if (kind == "pca") return pca_from_json(open_envelope(j, "pca"));
  if (kind == "iae") return iae_from_json(open_envelope(j, "iae"));
  fail(ErrorCode::invalid_argument, "checkpoint kind '" + kind + "' is not an embedding");
}

flow::CouplingFlow flow_from_json(const Json& j) {
  return guarded("flow", [&] {
    flow::CouplingFlow f;
    f.dim = j.at("dim").get<Index>();
    for (const auto& lj : j.at("layers")) {
      flow::CouplingLayer layer;
      layer.dim = f.dim;
      for (const auto& b : lj.at("mask")) layer.mask.push_back(b.get<int>() != 0);
      layer.scale_clamp = lj.at("scale_clamp").get<double>();
      std::tie(layer.net_spec, layer.scale_net) = mlp_from_json(lj.at("scale_net"));
      auto [shift_spec, shift_params] = mlp_from_json(lj.at("shift_net"));
      require(shift_spec.layer_widths == layer.net_spec.layer_widths, ErrorCode::shape_mismatch,
              "flow: scale and shift networks differ in shape");
      layer.shift_net = std::move(shift_params);
      f.layers.push_back(std::move(layer));
    }
    f.validate();
    return f;
  });
}

Json envelope(const std::string& kind, Json payload) {
  return {{"format", format_name}, {"version", format_version}, {"kind", kind},
          {"model", std::move(payload)}};
}

Json open_envelope(const Json& doc, const std::string& expected_kind) {
  return guarded("checkpoint", [&] {
    require(doc.at("format").get<std::string>() == format_name, ErrorCode::io,
            "not an isoflow checkpoint");
    const int version = doc.at("version").get<int>();
    require(version == format_version, ErrorCode::io,
            "unsupported checkpoint version " + std::to_string(version));
    const auto kind = doc.at("kind").get<std::string>();
    require(kind == expected_kind, ErrorCode::invalid_argument,
            "checkpoint holds '" + kind + "', expected '" + expected_kind + "'");
    return doc.at("model");
  });
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& doc) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

void save_embedding(const std::filesystem::path& path, const embed::Embedding& e) {
  write_json(path, envelope(embed::method_name(e), to_json(e)));
}

embed::Embedding load_embedding(const std::filesystem::path& path) {
  return embedding_from_json(read_json(path));
}

void save_flow(const std::filesystem::path& path, const flow::CouplingFlow& f) {
  write_json(path, envelope("flow", to_json(f)));
}

flow::CouplingFlow load_flow(const std::filesystem::path& path) {
  return flow_from_json(open_envelope(read_json(path), "flow"));
}

}  // namespace isoflow::checkpoint
