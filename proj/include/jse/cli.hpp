#pragma once

// Command-line front end. `run_cli` returns the process exit code:
// 0 success, 2 usage, 3 data error, 4 numerical failure.

#include "jse/artifact.hpp"
#include "jse/config.hpp"
#include "jse/results.hpp"

#include <CLI11.hpp>

#include <filesystem>

namespace jse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

namespace detail {

struct CliState {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::optional<int> workers;
  std::string out_dir = ".";

  // gen-toy
  std::optional<double> rho, gamma_sp, gamma_mt, b_sp, b_mt, angle, split;
  std::optional<Index> n, d, n_test;

  // fit / transform / eval
  std::string method = "jse";
  std::string train_path, val_path, test_path, input_path, output_path, artifact_path;
  std::optional<Index> pca_k;
  bool demean_only = false;
  std::optional<std::string> delta;

  // sweep / report
  std::optional<int> seeds;
  std::string results_path;
};

inline SweepConfig base_config(const CliState& s) {
  SweepConfig cfg;
  if (!s.config_path.empty()) apply_config(load_config(s.config_path), cfg);
  return cfg;
}

inline std::filesystem::path out_path(const CliState& s, const std::string& file) {
  std::filesystem::create_directories(s.out_dir);
  return std::filesystem::path(s.out_dir) / file;
}

inline int cmd_gen_toy(const CliState& s, std::ostream& out) {
  ToyConfig t = base_config(s).toy;
  if (s.rho) t.rho = *s.rho;
  if (s.n) t.n = *s.n;
  if (s.d) t.d = *s.d;
  if (s.gamma_sp) t.gamma_sp = *s.gamma_sp;
  if (s.gamma_mt) t.gamma_mt = *s.gamma_mt;
  if (s.b_sp) t.b_sp = *s.b_sp;
  if (s.b_mt) t.b_mt = *s.b_mt;
  if (s.angle) t.angle_deg = *s.angle;
  if (s.split) t.split_fraction = *s.split;
  if (s.n_test) t.n_test = *s.n_test;
  if (s.seed) t.seed = *s.seed;
  const ToySplits splits = gen_toy(t);
  const LabeledEmbeddings test = gen_toy_test(t);
  for (const auto& [file, data] : {std::pair<const char*, const LabeledEmbeddings*>{"train.csv", &splits.train},
                                   {"val.csv", &splits.val},
                                   {"test.csv", &test}}) {
    const auto p = out_path(s, file);
    save_embeddings(p.string(), *data);
    out << "wrote " << p.string() << " (" << data->size() << " x " << data->dim() << ")\n";
  }
  return kExitOk;
}

inline int cmd_fit(const CliState& s, std::ostream& out) {
  if (s.pca_k && s.demean_only) throw CLI::ValidationError("--pca and --demean-only are mutually exclusive");
  SweepConfig cfg = base_config(s);
  if (s.delta) cfg.methods.jse.delta = *s.delta == "auto" ? std::nullopt : std::optional<double>(std::stod(*s.delta));
  const Method method = parse_method(s.method);
  const LabeledEmbeddings train_raw = load_embeddings(s.train_path);
  const LabeledEmbeddings val_raw = load_embeddings(s.val_path);
  if (train_raw.dim() != val_raw.dim()) throw DataError("train and validation files have different dimensions");

  Artifact a;
  a.transform_mode = cfg.methods.jse.transform_mode;
  if (s.pca_k) {
    a.preprocess = Preprocess::pca;
    a.pca = pca_fit(train_raw.z(), *s.pca_k);
  } else if (s.demean_only) {
    a.preprocess = Preprocess::demean;
    a.pca = demean_fit(train_raw.z());
  }
  const LabeledEmbeddings train = a.prepare(train_raw);
  const LabeledEmbeddings val = a.prepare(val_raw);
  a.fitted = fit_method(method, train, val, cfg.methods, s.seed.value_or(0));

  const std::string path =
      s.artifact_path.empty() ? out_path(s, std::string(to_string(method)) + ".artifact").string() : s.artifact_path;
  save_artifact(path, a);
  out << "method " << to_string(method) << " d_sp_hat " << a.fitted.d_sp_hat << " d_mt_hat " << a.fitted.d_mt_hat;
  if (method == Method::rlace) out << " converged " << (a.fitted.converged ? 1 : 0);
  out << "\nwrote " << path << '\n';
  return kExitOk;
}

inline int cmd_transform(const CliState& s, std::ostream& out) {
  const Artifact a = load_artifact(s.artifact_path);
  const LabeledEmbeddings in = load_embeddings(s.input_path);
  const LabeledEmbeddings transformed = in.with_z(a.transform(in.z()));
  const std::string path = s.output_path.empty() ? out_path(s, "transformed.csv").string() : s.output_path;
  save_embeddings(path, transformed);
  out << "wrote " << path << " (" << transformed.size() << " x " << transformed.dim() << ")\n";
  return kExitOk;
}

inline int cmd_eval(const CliState& s, std::ostream& out) {
  const Artifact a = load_artifact(s.artifact_path);
  const LabeledEmbeddings test = load_embeddings(s.test_path);
  const EvalSummary summary = a.evaluate(test);
  const std::string line = eval_record(summary, to_string(a.fitted.method), s.test_path).dump();
  out << line << '\n';
  if (!s.output_path.empty()) {
    std::ofstream os(s.output_path, std::ios::app);
    if (!os) throw DataError("cannot open '" + s.output_path + "' for writing");
    os << line << '\n';
  }
  return kExitOk;
}

inline int cmd_sweep(const CliState& s, std::ostream& out) {
  SweepConfig cfg = base_config(s);
  if (s.seed) cfg.base_seed = *s.seed;
  if (s.seeds) cfg.seeds = *s.seeds;
  if (s.workers) cfg.workers = *s.workers;
  const SweepResult r = run_sweep(cfg);

  const auto results = out_path(s, "results.csv");
  const auto cells = out_path(s, "cells.csv");
  const auto plot = out_path(s, "plot.tsv");
  {
    std::ofstream os(results);
    write_results_csv(os, r.runs);
  }
  {
    std::ofstream os(cells);
    write_cells_csv(os, r.cells);
  }
  {
    std::ofstream os(plot);
    write_plot_tsv(os, r.cells);
  }
  std::size_t failed = 0;
  for (const auto& c : r.cells) failed += c.aggregated ? 0 : 1;
  out << "wrote " << results.string() << ", " << cells.string() << ", " << plot.string() << '\n';
  out << r.cells.size() << " cells, " << r.runs.size() << " runs";
  if (failed) out << ", " << failed << " cell(s) below the success threshold";
  out << '\n';
  return kExitOk;
}

inline int cmd_report(const CliState& s, std::ostream& out) {
  std::ifstream is(s.results_path);
  if (!is) throw DataError("cannot open '" + s.results_path + "'");
  const auto runs = read_results_csv(is, s.results_path);
  const auto cells = aggregate_runs(runs);
  write_report(out, cells);
  return kExitOk;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  detail::CliState s;
  CLI::App app{"Joint subspace estimation for linear concept removal", "jse_cli"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", s.seed, "Base seed");
  app.add_option("--config", s.config_path, "Configuration file (key = value with [sections])");
  app.add_option("--workers", s.workers, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--out", s.out_dir, "Output directory");

  auto* gen = app.add_subcommand("gen-toy", "Write Toy train/val/test CSV files");
  gen->add_option("--rho", s.rho, "Train/validation correlation between z_1 and z_2");
  gen->add_option("--n", s.n, "Train + validation sample count");
  gen->add_option("--d", s.d, "Dimension");
  gen->add_option("--gamma-sp", s.gamma_sp);
  gen->add_option("--gamma-mt", s.gamma_mt);
  gen->add_option("--b-sp", s.b_sp);
  gen->add_option("--b-mt", s.b_mt);
  gen->add_option("--angle", s.angle, "Angle between w_sp and w_mt in degrees");
  gen->add_option("--split", s.split, "Training share of n");
  gen->add_option("--n-test", s.n_test, "Test size (default n)");

  auto* fit = app.add_subcommand("fit", "Fit a method and write an artifact");
  fit->add_option("--method", s.method, "jse, erm, gw-erm, inlp or rlace");
  fit->add_option("--train", s.train_path)->required();
  fit->add_option("--val", s.val_path)->required();
  fit->add_option("--pca", s.pca_k, "Reduce to k principal components (fitted on train)");
  fit->add_flag("--demean-only", s.demean_only, "Subtract the training mean only");
  fit->add_option("--delta", s.delta, "JSE offset: a number or 'auto'");
  fit->add_option("--artifact", s.artifact_path, "Artifact path (default <out>/<method>.artifact)");

  auto* tr = app.add_subcommand("transform", "Apply an artifact's transform to an embedding file");
  tr->add_option("--artifact", s.artifact_path)->required();
  tr->add_option("--input", s.input_path)->required();
  tr->add_option("--output", s.output_path, "Output CSV (default <out>/transformed.csv)");

  auto* ev = app.add_subcommand("eval", "Evaluate an artifact on a test file (JSON lines)");
  ev->add_option("--artifact", s.artifact_path)->required();
  ev->add_option("--test", s.test_path)->required();
  ev->add_option("--output", s.output_path, "Append the record to this file");

  auto* sw = app.add_subcommand("sweep", "Run a configured grid and write results.csv, cells.csv, plot.tsv");
  sw->add_option("--seeds", s.seeds, "Override the number of seeds per cell");

  auto* rep = app.add_subcommand("report", "Print summary tables from a results CSV");
  rep->add_option("--results", s.results_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return detail::cmd_gen_toy(s, out);
    if (fit->parsed()) return detail::cmd_fit(s, out);
    if (tr->parsed()) return detail::cmd_transform(s, out);
    if (ev->parsed()) return detail::cmd_eval(s, out);
    if (sw->parsed()) return detail::cmd_sweep(s, out);
    if (rep->parsed()) return detail::cmd_report(s, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: invalid number: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace jse
