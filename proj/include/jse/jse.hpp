#pragma once

// Joint Subspace Estimation.
//
// Nested loop: the inner loop repeatedly solves the jointly orthogonal
// logistic regression on the remaining embeddings and projects out accepted
// main-task vectors; once the inner loop stops, the spurious candidate from
// the last joint solve is tested and, if accepted, projected out of the
// original embeddings before the next outer iteration. A candidate is
// accepted when it beats the intercept-only classifier for its own label and
// is more predictive of its own label than of the other one.

#include "jse/core_types.hpp"
#include "jse/eval.hpp"
#include "jse/hypothesis_tests.hpp"
#include "jse/logreg.hpp"

#include <optional>

namespace jse {

enum class LoopOrder { mt_inner, sp_inner };
enum class TransformMode { remove_sp, keep_mt };

inline const char* to_string(LoopOrder o) { return o == LoopOrder::mt_inner ? "mt-inner" : "sp-inner"; }
inline const char* to_string(TransformMode m) { return m == TransformMode::remove_sp ? "remove-sp" : "keep-mt"; }

inline OptimizerConfig default_jse_optimizer() {
  OptimizerConfig c;
  c.learning_rate = 1e-2;
  return c;
}

struct JseConfig {
  double alpha = 0.05;
  std::optional<double> delta = 0.0;  // nullopt: heuristic from the first joint solve
  Index max_dim = 0;                  // 0: use d
  LoopOrder loop_order = LoopOrder::mt_inner;
  TransformMode transform_mode = TransformMode::remove_sp;
  bool group_weighted_tests = true;
  bool estimate_mt_basis = true;
  OneDimSolver one_dim_solver = OneDimSolver::sgd;
  OptimizerConfig optimizer = default_jse_optimizer();
  std::uint64_t seed = 0;

  void validate(Index d) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("JseConfig: alpha must be in (0,1)");
    if (max_dim < 0 || max_dim > d) throw DataError("JseConfig: max_dim must be in [0, d]");
    if (delta && !std::isfinite(*delta)) throw DataError("JseConfig: delta must be finite");
    optimizer.validate();
  }
};

namespace detail {

enum class Role { spurious, main_task };

inline Target own_target(Role r) { return r == Role::spurious ? Target::spurious : Target::main_task; }
inline Target other_target(Role r) { return r == Role::spurious ? Target::main_task : Target::spurious; }

class JseRun {
 public:
  JseRun(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const JseConfig& cfg)
      : train_(train),
        val_(val),
        cfg_(cfg),
        d_(train.dim()),
        cap_(cfg.max_dim > 0 ? cfg.max_dim : train.dim()),
        random_sp_(fit_intercept_only(train, Target::spurious)),
        random_mt_(fit_intercept_only(train, Target::main_task)),
        delta_(cfg.delta.value_or(0.0)),
        delta_pending_(!cfg.delta.has_value()) {}

  SubspaceResult run() {
    const Role outer = cfg_.loop_order == LoopOrder::mt_inner ? Role::spurious : Role::main_task;
    const Role inner = outer == Role::spurious ? Role::main_task : Role::spurious;

    Basis v_outer(d_, 0);
    Basis v_inner(d_, 0);
    bool inner_current = false;  // v_inner was estimated against the final v_outer
    SubspaceResult result;
    result.termination = Termination::dimension_exhausted;
    bool stopped = false;

    for (int i = 1; i <= static_cast<int>(cap_); ++i) {
      auto [inner_basis, outer_candidate] = inner_loop(i, inner, v_outer, result);
      v_inner = std::move(inner_basis);
      inner_current = true;
      if (!outer_candidate) {
        result.termination = Termination::dimension_exhausted;
        stopped = true;
        break;
      }
      const auto train_perp = train_.with_z(project_out(train_.z(), v_outer));
      const auto val_perp = val_.with_z(project_out(val_.z(), v_outer));
      CandidateTests t = test_candidate(outer, *outer_candidate, train_perp, val_perp, i, 0);
      const bool accepted = t.accepted;
      record(outer, std::move(t), result);
      if (!accepted) {
        result.termination = Termination::test_rejected;
        stopped = true;
        break;
      }
      v_outer = append_column(v_outer, *outer_candidate);
      inner_current = false;
      if (v_outer.cols() >= d_) break;
    }
    if (!stopped) result.termination = cap_ < d_ ? Termination::max_iterations : Termination::dimension_exhausted;
    if (!inner_current && cfg_.estimate_mt_basis && v_outer.cols() < d_) {
      v_inner = inner_loop(static_cast<int>(v_outer.cols()) + 1, inner, v_outer, result).first;
    }

    const Basis& sp = outer == Role::spurious ? v_outer : v_inner;
    const Basis& mt = outer == Role::spurious ? v_inner : v_outer;
    result.sp_basis = SubspaceBasis(sp, BasisKind::spurious);
    result.mt_basis = SubspaceBasis(mt, BasisKind::main_task);
    result.delta = delta_;
    return result;
  }

 private:
  /// Runs the inner loop against the current outer basis. Returns the accepted
  /// inner vectors and the outer-role candidate from the last joint solve.
  std::pair<Basis, std::optional<Vector>> inner_loop(int i, Role inner, const Basis& v_outer, SubspaceResult& result) {
    Basis v_inner(d_, 0);
    std::optional<Vector> outer_candidate;
    for (int j = 1; j <= static_cast<int>(cap_); ++j) {
      const Basis removed = concat(v_outer, v_inner);
      if (d_ - removed.cols() < 2) break;  // no room for an orthogonal pair
      const auto train_rem = train_.with_z(project_out(train_.z(), removed));
      const auto val_rem = val_.with_z(project_out(val_.z(), removed));
      const JointFit fit = fit_joint_orthogonal(
          train_rem, val_rem, cfg_.optimizer.with_seed(derive_seed(cfg_.seed, i, j, 0u)), removed);
      const double n_sp = fit.sp.w.norm();
      const double n_mt = fit.mt.w.norm();
      if (!(n_sp > 1e-12) || !(n_mt > 1e-12)) {
        if (n_sp > 1e-12) outer_candidate = orthogonalize_against(fit.sp.w / n_sp, removed).normalized();
        break;
      }
      // Re-orthogonalize against everything removed so the bases stay orthonormal to working precision.
      Vector v_sp = orthogonalize_against(fit.sp.w / n_sp, removed).normalized();
      Vector v_mt = orthogonalize_against(fit.mt.w / n_mt, removed);
      v_mt = (v_mt - v_sp * v_sp.dot(v_mt)).normalized();

      if (delta_pending_) {
        const Direction own_sp = fit_one(v_sp, train_rem, val_rem, Target::spurious, i, j, Role::spurious);
        const Direction own_mt = fit_one(v_mt, train_rem, val_rem, Target::main_task, i, j, Role::main_task);
        delta_ = delta_heuristic(own_sp, own_mt, val_rem, cfg_.group_weighted_tests);
        delta_pending_ = false;
      }

      const Vector& inner_v = inner == Role::main_task ? v_mt : v_sp;
      outer_candidate = inner == Role::main_task ? v_sp : v_mt;
      CandidateTests t = test_candidate(inner, inner_v, train_rem, val_rem, i, j);
      const bool accepted = t.accepted;
      record(inner, std::move(t), result);
      if (!accepted) break;
      v_inner = append_column(v_inner, inner_v);
    }
    return {std::move(v_inner), std::move(outer_candidate)};
  }

  Direction fit_one(const Vector& v, const LabeledEmbeddings& tr, const LabeledEmbeddings& va, Target target, int i,
                    int j, Role role) const {
    const auto seed = derive_seed(cfg_.seed, i, j, 1u + static_cast<unsigned>(role == Role::main_task),
                                  10u + static_cast<unsigned>(target == Target::main_task));
    return fit_1d_logreg(tr.z(), tr.labels(target), va.z(), va.labels(target), v, cfg_.optimizer.with_seed(seed),
                         cfg_.one_dim_solver);
  }

  CandidateTests test_candidate(Role role, const Vector& v, const LabeledEmbeddings& tr, const LabeledEmbeddings& va,
                                int i, int j) const {
    const Direction own = fit_one(v, tr, va, own_target(role), i, j, role);
    const Direction cross = fit_one(v, tr, va, other_target(role), i, j, role);
    CandidateTests t;
    t.v = v;
    t.outer = i;
    t.inner = j;
    t.vs_random = t_vs_random(own, va, own_target(role), role == Role::spurious ? random_sp_ : random_mt_,
                              cfg_.alpha, cfg_.group_weighted_tests);
    const Direction& sp_fit = role == Role::spurious ? own : cross;
    const Direction& mt_fit = role == Role::spurious ? cross : own;
    t.relative = t_relative(sp_fit, mt_fit, va, role == Role::spurious ? CandidateRole::spurious : CandidateRole::main_task,
                            delta_, cfg_.alpha, cfg_.group_weighted_tests);
    t.accepted = t.vs_random.decision && t.relative.decision;
    return t;
  }

  static void record(Role role, CandidateTests t, SubspaceResult& result) {
    (role == Role::spurious ? result.sp_tests : result.mt_tests).push_back(std::move(t));
  }

  const LabeledEmbeddings& train_;
  const LabeledEmbeddings& val_;
  const JseConfig& cfg_;
  Index d_;
  Index cap_;
  LinearModel random_sp_;
  LinearModel random_mt_;
  double delta_;
  bool delta_pending_;
};

}  // namespace detail

/// Estimates orthonormal, mutually orthogonal spurious and main-task bases.
/// All tests are evaluated on `val`, projected with the bases estimated on `train`.
inline SubspaceResult jse_fit(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const JseConfig& cfg) {
  if (train.size() == 0 || val.size() == 0) throw DataError("jse_fit: empty split");
  if (train.dim() != val.dim()) throw DataError("jse_fit: train and validation dimensions differ");
  cfg.validate(train.dim());
  const auto counts = val.group_counts();
  for (std::size_t g = 0; g < 4; ++g)
    if (counts[g] < 2) throw EmptyGroupError("jse_fit: validation group " + std::to_string(g + 1) + " has fewer than 2 samples");
  detail::JseRun run(train, val, cfg);
  return run.run();
}

/// d x d right-multiplied transform for a fitted result.
inline Eigen::MatrixXd jse_projection(const SubspaceResult& result, TransformMode mode) {
  const Index d = result.sp_basis.dim();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  if (mode == TransformMode::remove_sp) return eye - result.sp_basis.v * result.sp_basis.v.transpose();
  return result.mt_basis.v * result.mt_basis.v.transpose();
}

/// remove-sp: Z (I - V_sp V_sp^T); keep-mt: Z V_mt V_mt^T.
inline Matrix jse_transform(const Matrix& z, const SubspaceResult& result, TransformMode mode) {
  const Index d = mode == TransformMode::remove_sp ? result.sp_basis.dim() : result.mt_basis.dim();
  if (z.cols() != d) throw DataError("jse_transform: dimension mismatch");
  return mode == TransformMode::remove_sp ? project_out(z, result.sp_basis.v) : project_onto(z, result.mt_basis.v);
}

/// Optimizer for the downstream main-task classifier: class-balanced
/// batches, learning rate 0.1.
inline OptimizerConfig default_downstream_optimizer() {
  OptimizerConfig c;
  c.learning_rate = 1e-1;
  c.balance = Sampling::class_balanced;
  return c;
}

struct PipelineResult {
  SubspaceResult subspaces;
  LinearModel downstream;
  EvalSummary summary;
};

/// Fits JSE on train/val, transforms all splits, trains the main-task
/// classifier on the transformed training split and evaluates it on test.
inline PipelineResult jse_pipeline(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                                   const LabeledEmbeddings& test, const JseConfig& cfg,
                                   const OptimizerConfig& downstream = default_downstream_optimizer()) {
  if (train.dim() != test.dim()) throw DataError("jse_pipeline: test dimension differs");
  PipelineResult out;
  out.subspaces = jse_fit(train, val, cfg);
  const auto mode = cfg.transform_mode;
  const auto tr = train.with_z(jse_transform(train.z(), out.subspaces, mode));
  const auto va = val.with_z(jse_transform(val.z(), out.subspaces, mode));
  out.downstream = fit_logreg(tr, Target::main_task, va, downstream);
  out.summary = evaluate(out.downstream, test.with_z(jse_transform(test.z(), out.subspaces, mode)));
  return out;
}

}  // namespace jse
