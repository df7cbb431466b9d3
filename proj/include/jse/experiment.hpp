#pragma once

// Seeded experiment runner: fits one of the five methods, trains the
// downstream classifier where needed, evaluates on the OOD test set and
// aggregates over seeds and grid points.

#include "jse/baselines.hpp"
#include "jse/eval.hpp"
#include "jse/jse.hpp"
#include "jse/synthetic.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <optional>
#include <thread>

namespace jse {

enum class Method { jse, erm, gw_erm, inlp, rlace };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::jse: return "jse";
    case Method::erm: return "erm";
    case Method::gw_erm: return "gw-erm";
    case Method::inlp: return "inlp";
    case Method::rlace: return "rlace";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::jse, Method::erm, Method::gw_erm, Method::inlp, Method::rlace})
    if (s == to_string(m)) return m;
  throw DataError("unknown method '" + std::string(s) + "' (expected jse, erm, gw-erm, inlp or rlace)");
}

struct MethodConfigs {
  JseConfig jse{};
  InlpConfig inlp{};
  RlaceConfig rlace{};
  OptimizerConfig downstream = default_downstream_optimizer();
};

/// A fitted method: the d x d right-multiplied transform (identity for the
/// ERM variants) and the downstream main-task model trained on transformed data.
struct FittedMethod {
  Method method = Method::erm;
  Eigen::MatrixXd transform;
  LinearModel downstream;
  std::optional<SubspaceResult> subspaces;  // jse only
  Basis removed;                            // inlp / rlace directions
  Index d_sp_hat = 0;
  Index d_mt_hat = 0;
  bool converged = true;
};

/// Fits `method` with every internal seed derived from `seed`.
inline FittedMethod fit_method(Method method, const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                               const MethodConfigs& cfgs, std::uint64_t seed) {
  FittedMethod out;
  out.method = method;
  const Index d = train.dim();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const OptimizerConfig downstream = cfgs.downstream.with_seed(derive_seed(seed, 0xd0u));
  switch (method) {
    case Method::jse: {
      JseConfig c = cfgs.jse;
      c.seed = derive_seed(seed, 0x15eu);
      out.subspaces = jse_fit(train, val, c);
      out.transform = jse_projection(*out.subspaces, c.transform_mode);
      out.d_sp_hat = out.subspaces->d_sp();
      out.d_mt_hat = out.subspaces->d_mt();
      break;
    }
    case Method::erm:
    case Method::gw_erm:
      out.transform = eye;
      break;
    case Method::inlp: {
      InlpConfig c = cfgs.inlp;
      c.seed = derive_seed(seed, 0x1b1u);
      const InlpResult r = inlp_fit(train, val, c);
      out.removed = r.basis.v;
      out.transform = eye - r.basis.v * r.basis.v.transpose();
      out.d_sp_hat = r.basis.rank();
      break;
    }
    case Method::rlace: {
      RlaceConfig c = cfgs.rlace;
      c.seed = derive_seed(seed, 0x41aceu);
      const RlaceResult r = rlace_fit(train, val, c);
      out.removed = r.removed;
      out.transform = r.projection;
      out.d_sp_hat = r.removed.cols();
      out.converged = r.converged;
      break;
    }
  }
  if (method == Method::erm) {
    out.downstream = erm_fit(train, val, downstream);
  } else if (method == Method::gw_erm) {
    out.downstream = gw_erm_fit(train, val, downstream);
  } else {
    const auto tr = train.with_z(train.z() * out.transform);
    const auto va = val.with_z(val.z() * out.transform);
    out.downstream = fit_logreg(tr, Target::main_task, va, downstream);
  }
  return out;
}

inline EvalSummary evaluate(const FittedMethod& f, const LabeledEmbeddings& test) {
  return evaluate(f.downstream, test, f.transform);
}

enum class SweepAxis { rho, n, angle };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::rho: return "rho";
    case SweepAxis::n: return "n";
    case SweepAxis::angle: return "angle";
  }
  return "?";
}

inline SweepAxis parse_axis(std::string_view s) {
  for (SweepAxis a : {SweepAxis::rho, SweepAxis::n, SweepAxis::angle})
    if (s == to_string(a)) return a;
  throw DataError("unknown sweep axis '" + std::string(s) + "' (expected rho, n or angle)");
}

struct SweepConfig {
  ToyConfig toy{};
  MethodConfigs methods{};
  std::vector<Method> method_list{Method::jse, Method::erm, Method::inlp, Method::rlace};
  SweepAxis axis = SweepAxis::rho;
  std::vector<double> values{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int seeds = 100;
  std::uint64_t base_seed = 0;
  int workers = 1;
  double min_success = 0.9;

  void validate() const {
    if (method_list.empty()) throw DataError("sweep: method list is empty");
    if (values.empty()) throw DataError("sweep: no grid values");
    if (seeds < 1) throw DataError("sweep: seeds must be >= 1");
    if (workers < 1) throw DataError("sweep: workers must be >= 1");
    for (double v : values) toy_at(v).validate();
  }

  ToyConfig toy_at(double x) const {
    ToyConfig t = toy;
    switch (axis) {
      case SweepAxis::rho: t.rho = x; break;
      case SweepAxis::n: t.n = static_cast<Index>(std::llround(x)); break;
      case SweepAxis::angle: t.angle_deg = x; break;
    }
    return t;
  }
};

struct RunRecord {
  Method method = Method::jse;
  std::string x_name;
  double x_value = 0.0;
  int seed = 0;  // replicate index within the cell
  EvalSummary summary{};
  Index d_sp_hat = 0;
  Index d_mt_hat = 0;
  double runtime_ms = 0.0;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct Stat {
  double mean = 0.0;
  std::optional<double> se;  // absent for a single run

  double ci_half() const { return se ? 1.96 * *se : 0.0; }
};

/// Mean and standard error (sample sd / sqrt(m)).
inline Stat summarize(std::span<const double> xs) {
  Stat s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return s;
}

struct CellAggregate {
  Method method = Method::jse;
  std::string x_name;
  double x_value = 0.0;
  int runs = 0;
  int failures = 0;
  bool aggregated = false;
  Stat average, worst_group, macro_average;
  std::array<Stat, 4> group_acc{};
  Stat d_sp_hat;
  std::string error;
};

struct SweepResult {
  std::vector<RunRecord> runs;  // ordered by (x, seed, method)
  std::vector<CellAggregate> cells;  // ordered by (x, method)

  const CellAggregate* cell(Method m, double x) const {
    for (const auto& c : cells)
      if (c.method == m && c.x_value == x) return &c;
    return nullptr;
  }
};

inline CellAggregate aggregate_cell(Method m, const std::string& x_name, double x, std::span<const RunRecord> runs,
                                    double min_success) {
  CellAggregate c;
  c.method = m;
  c.x_name = x_name;
  c.x_value = x;
  std::vector<double> avg, worst, macro, dsp;
  std::array<std::vector<double>, 4> groups;
  for (const auto& r : runs) {
    if (r.method != m || r.x_value != x) continue;
    ++c.runs;
    if (!r.ok()) {
      ++c.failures;
      if (c.error.empty()) c.error = r.error;
      continue;
    }
    avg.push_back(r.summary.average);
    worst.push_back(r.summary.worst_group);
    macro.push_back(r.summary.macro_average);
    dsp.push_back(static_cast<double>(r.d_sp_hat));
    for (std::size_t g = 0; g < 4; ++g) groups[g].push_back(r.summary.group_acc[g]);
  }
  const int ok = c.runs - c.failures;
  c.aggregated = c.runs > 0 && static_cast<double>(ok) >= min_success * static_cast<double>(c.runs);
  if (!c.aggregated) {
    c.error = std::to_string(ok) + "/" + std::to_string(c.runs) + " seeds succeeded" +
              (c.error.empty() ? std::string() : "; first error: " + c.error);
    return c;
  }
  c.average = summarize(avg);
  c.worst_group = summarize(worst);
  c.macro_average = summarize(macro);
  c.d_sp_hat = summarize(dsp);
  for (std::size_t g = 0; g < 4; ++g) c.group_acc[g] = summarize(groups[g]);
  return c;
}

/// Cartesian sweep over grid values x seeds x methods. The data seed of a
/// run depends only on (base_seed, grid index, replicate), so every method
/// within a grid point sees the same draws and distinct grid points never
/// share one. Runs are distributed over `workers` threads; the output order
/// does not depend on scheduling.
inline SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::string x_name = to_string(cfg.axis);
  const std::size_t n_values = cfg.values.size();
  const auto n_seeds = static_cast<std::size_t>(cfg.seeds);
  const std::size_t n_methods = cfg.method_list.size();
  SweepResult out;
  out.runs.resize(n_values * n_seeds * n_methods);

  auto run_task = [&](std::size_t task) {
    const std::size_t xi = task / n_seeds;
    const std::size_t r = task % n_seeds;
    const double x = cfg.values[xi];
    ToyConfig toy = cfg.toy_at(x);
    toy.seed = derive_seed(cfg.base_seed, xi, r);
    std::optional<ToySplits> splits;
    std::optional<LabeledEmbeddings> test;
    std::string data_error;
    try {
      splits = gen_toy(toy);
      test = gen_toy_test(toy);
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      RunRecord& rec = out.runs[(xi * n_seeds + r) * n_methods + mi];
      rec.method = cfg.method_list[mi];
      rec.x_name = x_name;
      rec.x_value = x;
      rec.seed = static_cast<int>(r);
      if (!data_error.empty()) {
        rec.error = data_error;
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const FittedMethod f = fit_method(rec.method, splits->train, splits->val, cfg.methods, toy.seed);
        rec.summary = evaluate(f, *test);
        rec.d_sp_hat = f.d_sp_hat;
        rec.d_mt_hat = f.d_mt_hat;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      rec.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  };

  const std::size_t n_tasks = n_values * n_seeds;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) run_task(t);
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), n_tasks);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  for (double x : cfg.values)
    for (Method m : cfg.method_list) out.cells.push_back(aggregate_cell(m, x_name, x, out.runs, cfg.min_success));
  return out;
}

/// Single grid point, single method.
inline CellAggregate run_experiment(const ToyConfig& toy, Method method, const MethodConfigs& methods, int seeds,
                                    std::uint64_t base_seed = 0, int workers = 1) {
  SweepConfig cfg;
  cfg.toy = toy;
  cfg.methods = methods;
  cfg.method_list = {method};
  cfg.values = {toy.rho};
  cfg.seeds = seeds;
  cfg.base_seed = base_seed;
  cfg.workers = workers;
  return run_sweep(cfg).cells.front();
}

}  // namespace jse
