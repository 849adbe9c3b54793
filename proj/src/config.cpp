#include "isoflow/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>

#include "isoflow/seed.hpp"

namespace isoflow::config {

using nlohmann::json;

namespace {

// Typed access to one JSON object that rejects keys outside `allowed`.
class Section {
 public:
  Section(const json& j, std::string where, std::set<std::string> allowed)
      : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorCode::invalid_argument, where_ + ": expected an object");
    for (const auto& item : j.items()) {
      require(allowed.count(item.key()) > 0, ErrorCode::invalid_argument,
              where_ + ": unknown key '" + item.key() + "'");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) const {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::invalid_argument, path(key) + ": wrong type");
    }
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& out) const {
    if (!has(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    read(key, v);
    out = v;
  }

 private:
  const json& j_;
  std::string where_;
};

train::TrainConfig parse_train(const json& j, const std::string& where, train::TrainConfig t) {
  const Section s(j, where, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon",
                             "seed", "patience", "checkpoint_interval"});
  s.read("epochs", t.epochs);
  s.read("batch_size", t.batch_size);
  s.read("learning_rate", t.learning_rate);
  s.read("beta1", t.beta1);
  s.read("beta2", t.beta2);
  s.read("epsilon", t.epsilon);
  s.read("seed", t.seed);
  s.read_optional("patience", t.patience);
  s.read("checkpoint_interval", t.checkpoint_interval);
  t.validate();
  return t;
}

json train_json(const train::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"seed", t.seed},
          {"patience", t.patience ? json(*t.patience) : json(nullptr)},
          {"checkpoint_interval", t.checkpoint_interval}};
}

Activation read_activation(const Section& s, const std::string& key, Activation fallback) {
  std::string name = to_string(fallback);
  s.read(key, name);
  return activation_from_string(name);
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace

RunConfig parse(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  const Section top(doc, "config", {"dataset", "embedding", "flow", "pareto", "output_dir"});

  if (top.has("dataset")) {
    const Section s(top.raw("dataset"), "dataset",
                    {"name", "n", "seed", "path", "limit", "split", "split_seed"});
    auto& d = c.dataset;
    s.read("name", d.name);
    require(d.name == "scurve" || d.name == "sphere" || d.name == "mnist" || d.name == "csv",
            ErrorCode::invalid_argument, "dataset.name: unknown dataset '" + d.name + "'");
    s.read("n", d.n);
    s.read("seed", d.seed);
    std::string path;
    s.read("path", path);
    d.path = resolve(path, base_dir);
    s.read_optional("limit", d.limit);
    s.read("split", d.split);
    s.read("split_seed", d.split_seed);
    require(d.n >= 1, ErrorCode::invalid_argument, "dataset.n must be at least 1");
  }

  if (top.has("embedding")) {
    const Section s(top.raw("embedding"), "embedding",
                    {"method", "latent_dim", "cev", "hidden", "activation", "lambda",
                     "reconstruction", "seed", "train"});
    auto& e = c.embedding;
    s.read("method", e.method);
    require(e.method == "pca" || e.method == "iae", ErrorCode::invalid_argument,
            "embedding.method: expected 'pca' or 'iae'");
    s.read_optional("latent_dim", e.latent_dim);
    s.read_optional("cev", e.cev);
    s.read("hidden", e.hidden);
    e.activation = read_activation(s, "activation", e.activation);
    s.read("lambda", e.lambda);
    std::string recon = embed::to_string(e.reconstruction);
    s.read("reconstruction", recon);
    e.reconstruction = embed::reconstruction_from_string(recon);
    s.read("seed", e.seed);
    if (s.has("train")) e.train = parse_train(s.raw("train"), "embedding.train", e.train);
  }

  if (top.has("flow")) {
    const Section s(top.raw("flow"), "flow",
                    {"layers", "hidden", "activation", "scale_clamp", "seed", "train"});
    auto& f = c.flow;
    s.read("layers", f.layers);
    s.read("hidden", f.hidden);
    f.activation = read_activation(s, "activation", f.activation);
    s.read("scale_clamp", f.scale_clamp);
    s.read("seed", f.seed);
    if (s.has("train")) f.train = parse_train(s.raw("train"), "flow.train", f.train);
  }

  if (top.has("pareto")) {
    const Section s(top.raw("pareto"), "pareto", {"grid", "samples", "sample_seed"});
    s.read("grid", c.pareto.grid);
    s.read("samples", c.pareto.samples);
    s.read("sample_seed", c.pareto.sample_seed);
  }

  std::string out = c.output_dir.string();
  top.read("output_dir", out);
  c.output_dir = resolve(out, base_dir);
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_argument, path.string() + ": " + e.what());
  }
  return parse(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  const auto& e = c.embedding;
  const auto& f = c.flow;
  json dataset{{"name", d.name}, {"n", d.n}, {"seed", d.seed}, {"path", d.path.string()},
               {"limit", d.limit ? json(*d.limit) : json(nullptr)}, {"split", d.split},
               {"split_seed", d.split_seed}};
  json embedding{{"method", e.method},
                 {"latent_dim", e.latent_dim ? json(*e.latent_dim) : json(nullptr)},
                 {"cev", e.cev ? json(*e.cev) : json(nullptr)},
                 {"hidden", e.hidden},
                 {"activation", to_string(e.activation)},
                 {"lambda", e.lambda},
                 {"reconstruction", embed::to_string(e.reconstruction)},
                 {"seed", e.seed},
                 {"train", train_json(e.train)}};
  json flow{{"layers", f.layers}, {"hidden", f.hidden}, {"activation", to_string(f.activation)},
            {"scale_clamp", f.scale_clamp}, {"seed", f.seed}, {"train", train_json(f.train)}};
  json pareto{{"grid", c.pareto.grid}, {"samples", c.pareto.samples},
              {"sample_seed", c.pareto.sample_seed}};
  return {{"dataset", dataset}, {"embedding", embedding}, {"flow", flow}, {"pareto", pareto},
          {"output_dir", c.output_dir.string()}};
}

void override_seeds(RunConfig& c, std::uint64_t seed) {
  c.dataset.seed = mix_seed(seed, 1);
  c.dataset.split_seed = mix_seed(seed, 2);
  c.embedding.seed = mix_seed(seed, 3);
  c.embedding.train.seed = mix_seed(seed, 4);
  c.flow.seed = mix_seed(seed, 5);
  c.flow.train.seed = mix_seed(seed, 6);
  c.pareto.sample_seed = mix_seed(seed, 7);
}

bool apply_seed_env(RunConfig& c) {
  const char* value = std::getenv("ISOFLOW_SEED");
  if (value == nullptr || *value == '\0') return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long seed = std::strtoull(value, &end, 10);
  require(errno == 0 && *end == '\0' && value[0] != '-', ErrorCode::invalid_argument,
          std::string("ISOFLOW_SEED is not an unsigned integer: '") + value + "'");
  override_seeds(c, seed);
  return true;
}

data::Dataset load_dataset(const DatasetConfig& c) {
  data::Dataset d;
  if (c.name == "scurve") {
    d = data::gen_scurve(c.n, c.seed);
  } else if (c.name == "sphere") {
    d = data::gen_sphere_gaussian(c.n, c.seed);
  } else if (c.name == "mnist") {
    require(!c.path.empty(), ErrorCode::invalid_argument, "dataset.path: MNIST directory missing");
    d = data::load_mnist(data::mnist_files(c.path, "train"), c.limit);
  } else {
    require(!c.path.empty(), ErrorCode::invalid_argument, "dataset.path: CSV file missing");
    d.samples = data::read_csv(c.path);
    d.meta.name = "csv";
  }
  return data::split(std::move(d), c.split, c.split_seed);
}

embed::IaeFitConfig iae_fit_config(const RunConfig& c) {
  const auto& e = c.embedding;
  require(e.latent_dim.has_value(), ErrorCode::invalid_argument,
          "embedding.latent_dim is required for the I-AE");
  embed::IaeFitConfig cfg;
  cfg.architecture.latent_dim = *e.latent_dim;
  cfg.architecture.hidden = e.hidden;
  cfg.architecture.activation = e.activation;
  cfg.architecture.seed = e.seed;
  cfg.lambda = e.lambda;
  cfg.reconstruction = e.reconstruction;
  cfg.train = e.train;
  return cfg;
}

embed::PcaTarget pca_target(const EmbeddingConfig& c) {
  require(c.latent_dim.has_value() != c.cev.has_value(), ErrorCode::invalid_argument,
          "embedding: PCA needs exactly one of latent_dim and cev");
  return c.latent_dim ? embed::PcaTarget::dim(*c.latent_dim) : embed::PcaTarget::cev(*c.cev);
}

flow::FlowArchitecture flow_architecture(const FlowConfig& c, Index latent_dim) {
  flow::FlowArchitecture a;
  a.dim = latent_dim;
  a.layers = c.layers;
  a.hidden = c.hidden;
  a.activation = c.activation;
  a.scale_clamp = c.scale_clamp;
  a.seed = c.seed;
  return a;
}

eval::ParetoConfig pareto_config(const RunConfig& c) {
  eval::ParetoConfig p;
  p.iae = iae_fit_config(c);
  p.flow = flow_architecture(c.flow, p.iae.architecture.latent_dim);
  p.flow_train = c.flow.train;
  p.samples = c.pareto.samples;
  p.sample_seed = c.pareto.sample_seed;
  return p;
}

}  // namespace isoflow::config
