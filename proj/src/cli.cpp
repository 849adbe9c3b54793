#include "isoflow/cli.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "CLI11.hpp"

#include "isoflow/checkpoint.hpp"
#include "isoflow/config.hpp"
#include "isoflow/data.hpp"
#include "isoflow/embed.hpp"
#include "isoflow/eval.hpp"
#include "isoflow/flow.hpp"

#ifndef ISOFLOW_CODE_VERSION
#define ISOFLOW_CODE_VERSION "unknown"
#endif

namespace isoflow::cli {

namespace fs = std::filesystem;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
      return exit_usage;
    case ErrorCode::io:
    case ErrorCode::bad_magic:
    case ErrorCode::truncated:
      return exit_io;
    case ErrorCode::divergence:
      return exit_divergence;
    case ErrorCode::shape_mismatch:
    case ErrorCode::dimension_mismatch:
      return exit_shape;
    case ErrorCode::non_finite:
    case ErrorCode::singular:
      break;
  }
  return exit_failure;
}

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

void write_column(const fs::path& path, const std::string& name, const Vector& v) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << name << '\n';
  for (Index i = 0; i < v.size(); ++i) out << fmt("%.17g", v(i)) << '\n';
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

config::RunConfig load_config(const fs::path& path, std::ostream& out) {
  config::RunConfig c = config::load(path);
  if (config::apply_seed_env(c)) out << "seeds derived from ISOFLOW_SEED\n";
  return c;
}

void print_losses(std::ostream& out, const std::string& label, const std::vector<double>& v) {
  out << label;
  for (double x : v) out << "  " << fmt("%.3e", x);
  out << '\n';
}

flow::InjectiveFlowModel load_model(const fs::path& embed_path, const fs::path& flow_path) {
  flow::InjectiveFlowModel m{checkpoint::load_embedding(embed_path),
                             checkpoint::load_flow(flow_path)};
  m.validate();
  return m;
}

// ---- commands ---------------------------------------------------------------

struct GenDataArgs {
  std::string dataset;
  Index n = 1000;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path path;
};

void gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.dataset == "mnist") {
    require(!a.path.empty(), ErrorCode::invalid_argument, "gen-data: --path is required for mnist");
    for (const char* part : {"train", "t10k"}) {
      const auto files = data::mnist_files(a.path, part);
      const auto images = data::read_idx_images(files.images);
      const auto labels = data::read_idx_labels(files.labels);
      require(labels.size() == images.count, ErrorCode::dimension_mismatch,
              std::string(part) + ": label count differs from image count");
      out << part << ": " << images.count << " images of " << images.rows << "x" << images.cols
          << '\n';
    }
    return;
  }
  require(!a.out.empty(), ErrorCode::invalid_argument, "gen-data: --out is required");
  const data::Dataset d =
      a.dataset == "scurve" ? data::gen_scurve(a.n, a.seed) : data::gen_sphere_gaussian(a.n, a.seed);
  data::write_csv(a.out, d.samples);
  out << "wrote " << d.size() << " rows to " << a.out.string() << '\n';
}

struct FitEmbedArgs {
  std::string method;
  fs::path config;
  fs::path checkpoint;
  fs::path history;
  std::optional<double> cev;
};

void fit_embed(const FitEmbedArgs& a, std::ostream& out) {
  config::RunConfig c = load_config(a.config, out);
  c.embedding.method = a.method;
  if (a.cev) {
    c.embedding.cev = a.cev;
    c.embedding.latent_dim.reset();
  }
  const data::Dataset d = config::load_dataset(c.dataset);

  if (a.method == "pca") {
    const embed::PcaEmbedding e = embed::pca_fit(d.train(), config::pca_target(c.embedding));
    checkpoint::save_embedding(a.checkpoint, e);
    out << "pca: d = " << e.latent_dim << ", CEV = "
        << fmt("%.4f", embed::cumulative_explained_variance(e.singular_values, e.latent_dim))
        << "%\n";
    const auto errors = eval::reconstruction_errors(e, d.test());
    out << "test mse " << fmt("%.6e", errors.mse) << ", mae " << fmt("%.6e", errors.mae) << '\n';
    return;
  }

  embed::IaeFit fit = embed::iae_fit(d.train(), d.validation(), config::iae_fit_config(c));
  checkpoint::save_embedding(a.checkpoint, fit.model);
  const fs::path history = a.history.empty() ? with_suffix(a.checkpoint, ".history.csv") : a.history;
  fit.result.history.write_csv(history.string());

  const auto objective = embed::iae_objective(fit.model);
  const std::vector<Matrix*> refs = fit.model.parameter_refs();
  out << "epochs " << fit.result.history.records.back().epoch
      << (fit.result.stopped_early ? " (early stop, best " + std::to_string(fit.result.best_epoch) + ")"
                                   : "")
      << '\n';
  out << "split       l_total     l_ae        l_iso       l_piso\n";
  const Index chunk = c.embedding.train.batch_size;
  print_losses(out, "train     ", train::evaluate(refs, objective, d.train(), chunk, 0));
  print_losses(out, "validation", train::evaluate(refs, objective, d.validation(), chunk, 0));
  print_losses(out, "test      ", train::evaluate(refs, objective, d.test(), chunk, 0));
}

struct FitFlowArgs {
  fs::path embedding;
  fs::path config;
  fs::path checkpoint;
  fs::path history;
};

void fit_flow(const FitFlowArgs& a, std::ostream& out) {
  const config::RunConfig c = load_config(a.config, out);
  const embed::Embedding e = checkpoint::load_embedding(a.embedding);
  const Index d = embed::latent_dim(e);
  if (c.embedding.latent_dim) {
    require(*c.embedding.latent_dim == d, ErrorCode::shape_mismatch,
            "fit-flow: config latent_dim " + std::to_string(*c.embedding.latent_dim) +
                " differs from the checkpoint's " + std::to_string(d));
  }
  const data::Dataset ds = config::load_dataset(c.dataset);
  require(ds.dim() == embed::ambient_dim(e), ErrorCode::shape_mismatch,
          "fit-flow: data dimension " + std::to_string(ds.dim()) + " differs from the embedding's " +
              std::to_string(embed::ambient_dim(e)));
  const flow::FlowFit fit = flow::flow_fit(embed::encode(e, ds.train()),
                                           embed::encode(e, ds.validation()),
                                           config::flow_architecture(c.flow, d), c.flow.train);
  checkpoint::save_flow(a.checkpoint, fit.flow);
  const fs::path history = a.history.empty() ? with_suffix(a.checkpoint, ".history.csv") : a.history;
  fit.result.history.write_csv(history.string());
  const auto& records = fit.result.history.records;
  out << "flow: d = " << d << ", " << fit.flow.layers.size() << " coupling layers\n";
  out << "validation nll " << fmt("%.6f", records.front().validation[0]) << " -> "
      << fmt("%.6f", records.back().validation[0]) << '\n';
}

struct SampleArgs {
  fs::path embedding;
  fs::path flow;
  Index n = 1000;
  std::uint64_t seed = 0;
  fs::path out;
};

void sample(const SampleArgs& a, std::ostream& out) {
  const auto model = load_model(a.embedding, a.flow);
  data::write_csv(a.out, flow::sample(model, a.n, a.seed));
  out << "wrote " << a.n << " samples to " << a.out.string() << '\n';
}

struct DensityArgs {
  fs::path embedding;
  fs::path flow;
  fs::path in;
  fs::path out;
  bool gram_exact = false;
};

void density(const DensityArgs& a, std::ostream& out) {
  const auto model = load_model(a.embedding, a.flow);
  const Matrix x = data::read_csv(a.in);
  const Vector lp = a.gram_exact ? eval::gram_corrected_log_prob(model, x)
                                 : flow::log_prob_ambient(model, x);
  write_column(a.out, "log_prob", lp);
  out << "wrote " << lp.size() << " log-densities to " << a.out.string() << '\n';
}

struct EvalArgs {
  std::string metric;
  fs::path in;
  fs::path embedding;
  fs::path out;
  fs::path per_sample;
  std::uint64_t seed = 0;
};

void evaluate(const EvalArgs& a, std::ostream& out) {
  const Matrix x = data::read_csv(a.in);
  eval::EvalReport report;
  report.metric = a.metric;
  report.count = x.rows();
  report.seed = a.seed;
  if (a.metric == "surface-residual") {
    report.value = eval::surface_residual(x);
    const Vector r = (x.rowwise().squaredNorm().array() - 1.0).abs();
    report.per_sample.assign(r.data(), r.data() + r.size());
  } else {
    require(!a.embedding.empty(), ErrorCode::invalid_argument,
            "eval: --embed-checkpoint is required for " + a.metric);
    const embed::Embedding e = checkpoint::load_embedding(a.embedding);
    if (a.metric == "isometry-deviation") {
      report.per_sample = eval::isometry_factors(e, x);
      report.value = eval::isometry_deviation(e, x);
    } else {
      const auto errors = eval::reconstruction_errors(e, x);
      report.value = a.metric == "mse" ? errors.mse : errors.mae;
    }
  }
  require(std::isfinite(report.value), ErrorCode::non_finite, "eval: metric is not finite");

  nlohmann::json j = report.to_json();
  j.erase("per_sample");
  j["code_version"] = ISOFLOW_CODE_VERSION;
  if (!a.out.empty()) checkpoint::write_json(a.out, j);
  if (!a.per_sample.empty()) {
    require(!report.per_sample.empty(), ErrorCode::invalid_argument,
            "eval: " + a.metric + " has no per-sample values");
    write_column(a.per_sample, a.metric,
                 Eigen::Map<const Vector>(report.per_sample.data(),
                                          static_cast<Index>(report.per_sample.size())));
  }
  out << j.dump() << '\n';
}

struct ParetoArgs {
  fs::path config;
  std::vector<double> grid;
  fs::path out;
};

void pareto(const ParetoArgs& a, std::ostream& out) {
  config::RunConfig c = load_config(a.config, out);
  if (!a.grid.empty()) c.pareto.grid = a.grid;
  const data::Dataset d = config::load_dataset(c.dataset);
  out << "lambda      l_ae        l_iso       residual\n";
  const auto points = eval::pareto_sweep(
      d.train(), d.validation(), c.pareto.grid, config::pareto_config(c),
      [&out](const eval::ParetoPoint& p) {
        out << fmt("%-10g", p.lambda) << "  " << fmt("%.3e", p.l_ae) << "  " << fmt("%.3e", p.l_iso)
            << "  " << (p.surface_residual ? fmt("%.4f", *p.surface_residual) : "-") << std::endl;
      });
  eval::write_pareto_csv(a.out.string(), points);
  out << "wrote " << points.size() << " points to " << a.out.string() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Injective flows with isometric autoencoder embeddings", "isoflow"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic data set or check MNIST files");
  gen_cmd->add_option("--dataset", gen.dataset, "scurve, sphere or mnist")
      ->required()
      ->check(CLI::IsMember({"scurve", "sphere", "mnist"}));
  gen_cmd->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed");
  gen_cmd->add_option("--out", gen.out, "Output CSV");
  gen_cmd->add_option("--path", gen.path, "MNIST directory");

  FitEmbedArgs fe;
  auto* fe_cmd = app.add_subcommand("fit-embed", "Fit a PCA or I-AE embedding");
  fe_cmd->add_option("--method", fe.method, "pca or iae")
      ->required()
      ->check(CLI::IsMember({"pca", "iae"}));
  fe_cmd->add_option("--config", fe.config, "Run configuration (JSON)")->required();
  fe_cmd->add_option("--out-checkpoint", fe.checkpoint, "Embedding checkpoint to write")->required();
  fe_cmd->add_option("--history", fe.history, "Loss history CSV (default: <checkpoint>.history.csv)");
  fe_cmd->add_option("--cev", fe.cev, "PCA: cumulative explained variance target in percent")
      ->check(CLI::Range(0.0, 100.0));

  FitFlowArgs ff;
  auto* ff_cmd = app.add_subcommand("fit-flow", "Fit a flow on the latent codes of a frozen embedding");
  ff_cmd->add_option("--embed-checkpoint", ff.embedding, "Embedding checkpoint")->required();
  ff_cmd->add_option("--config", ff.config, "Run configuration (JSON)")->required();
  ff_cmd->add_option("--out-checkpoint", ff.checkpoint, "Flow checkpoint to write")->required();
  ff_cmd->add_option("--history", ff.history, "NLL history CSV (default: <checkpoint>.history.csv)");

  SampleArgs sa;
  auto* sa_cmd = app.add_subcommand("sample", "Draw samples from an embedding and flow");
  sa_cmd->add_option("--embed-checkpoint", sa.embedding, "Embedding checkpoint")->required();
  sa_cmd->add_option("--flow-checkpoint", sa.flow, "Flow checkpoint")->required();
  sa_cmd->add_option("--n", sa.n, "Number of samples")->check(CLI::PositiveNumber);
  sa_cmd->add_option("--seed", sa.seed, "Sampling seed");
  sa_cmd->add_option("--out", sa.out, "Output CSV")->required();

  DensityArgs da;
  auto* da_cmd = app.add_subcommand("density", "Evaluate log-densities of data points");
  da_cmd->add_option("--embed-checkpoint", da.embedding, "Embedding checkpoint")->required();
  da_cmd->add_option("--flow-checkpoint", da.flow, "Flow checkpoint")->required();
  da_cmd->add_option("--in", da.in, "Input CSV")->required();
  da_cmd->add_option("--out", da.out, "Output CSV with one log_prob column")->required();
  da_cmd->add_flag("--gram-exact", da.gram_exact, "Include the decoder Gram determinant term");

  EvalArgs ea;
  auto* ea_cmd = app.add_subcommand("eval", "Compute an evaluation metric");
  ea_cmd->add_option("--metric", ea.metric, "surface-residual, isometry-deviation, mse or mae")
      ->required()
      ->check(CLI::IsMember({"surface-residual", "isometry-deviation", "mse", "mae"}));
  ea_cmd->add_option("--in", ea.in, "Input CSV")->required();
  ea_cmd->add_option("--embed-checkpoint", ea.embedding, "Embedding checkpoint");
  ea_cmd->add_option("--out", ea.out, "Report JSON");
  ea_cmd->add_option("--per-sample", ea.per_sample, "Per-sample values CSV");
  ea_cmd->add_option("--seed", ea.seed, "Seed recorded in the report");

  ParetoArgs pa;
  auto* pa_cmd = app.add_subcommand("pareto", "Sweep the isometry weight and record the trade-off");
  pa_cmd->add_option("--config", pa.config, "Run configuration (JSON)")->required();
  pa_cmd->add_option("--grid", pa.grid, "Comma-separated lambda values")->delimiter(',');
  pa_cmd->add_option("--out", pa.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*gen_cmd) gen_data(gen, out);
    else if (*fe_cmd) fit_embed(fe, out);
    else if (*ff_cmd) fit_flow(ff, out);
    else if (*sa_cmd) sample(sa, out);
    else if (*da_cmd) density(da, out);
    else if (*ea_cmd) evaluate(ea, out);
    else if (*pa_cmd) pareto(pa, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
  return exit_ok;
}

}  // namespace isoflow::cli
