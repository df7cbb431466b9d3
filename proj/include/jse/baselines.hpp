#pragma once

// Comparison methods: iterative nullspace projection (INLP), a rank-k
// adversarial projection game in the style of relaxed linear adversarial
// concept erasure (RLACE), plain ERM and group-weighted ERM.

#include "jse/core_types.hpp"
#include "jse/hypothesis_tests.hpp"
#include "jse/jse.hpp"
#include "jse/logreg.hpp"

namespace jse {

struct InlpConfig {
  double alpha = 0.05;
  Index max_rounds = 0;  // 0: use d
  bool group_weighted = false;
  OptimizerConfig optimizer{};  // lr 0.1, no balancing
  std::uint64_t seed = 0;
};

struct InlpResult {
  SubspaceBasis basis;
  std::vector<TestReport> tests;        // one per round, including the stopping round
  std::vector<double> val_accuracy;     // spurious-classifier validation accuracy per round
};

namespace detail {
inline double accuracy_rate(const Vector& logits, const std::vector<int>& y) {
  std::size_t ok = 0;
  for (Index i = 0; i < logits.size(); ++i)
    if ((logits[i] >= 0.0 ? 1 : 0) == y[static_cast<std::size_t>(i)]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(y.size());
}
}  // namespace detail

/// Repeatedly fits a spurious-label classifier, projects its (orthonormalized)
/// weight vector out of train and validation, and stops once the classifier
/// is no longer significantly better (one-sided t-test on the validation BCE
/// difference) than the majority-rule classifier.
inline InlpResult inlp_fit(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const InlpConfig& cfg) {
  if (train.dim() != val.dim()) throw DataError("inlp_fit: train and validation dimensions differ");
  const Index d = train.dim();
  const Index rounds = cfg.max_rounds > 0 ? cfg.max_rounds : d;
  if (rounds > d) throw DataError("InlpConfig: max_rounds must be <= d");
  const LinearModel majority = fit_intercept_only(train, Target::spurious);
  Basis v(d, 0);
  InlpResult out;
  for (Index r = 1; r <= rounds && v.cols() < d; ++r) {
    const auto tr = train.with_z(project_out(train.z(), v));
    const auto va = val.with_z(project_out(val.z(), v));
    const LinearModel clf =
        fit_logreg(tr, Target::spurious, va, cfg.optimizer.with_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(r))));
    out.val_accuracy.push_back(detail::accuracy_rate(clf.logits(va.z()), va.y_sp()));
    if (clf.degenerate) break;
    const Vector dvec = bce(clf.predict_proba(va.z()), va.y_sp()) - bce(majority.predict_proba(va.z()), va.y_sp());
    TestReport rep = make_report(TestKind::inlp_vs_majority, diff_stats(dvec, va.group(), cfg.group_weighted), 0.0,
                                 cfg.alpha, Side::less);
    out.tests.push_back(rep);
    if (!rep.decision) break;
    const Vector w = orthogonalize_against(clf.w, v);
    const double norm = w.norm();
    if (!(norm > 1e-12)) break;
    v = append_column(v, w / norm);
  }
  out.basis = SubspaceBasis(v, BasisKind::spurious);
  return out;
}

struct RlaceConfig {
  Index rank = 1;
  int max_iters = 50000;
  double stop_accuracy = 0.51;
  int evaluate_every = 1000;
  OptimizerConfig optimizer{};  // shared by the adversary and the projection player
  std::uint64_t seed = 0;

  void validate(Index d) const {
    if (rank < 1 || rank >= d) throw DataError("RlaceConfig: rank must be in [1, d)");
    if (max_iters < 1) throw DataError("RlaceConfig: max_iters must be positive");
    if (evaluate_every < 1) throw DataError("RlaceConfig: evaluate_every must be positive");
    optimizer.validate();
  }
};

struct RlaceResult {
  Eigen::MatrixXd projection;  // I - U U^T, right-multiplied
  Basis removed;               // U, d x rank
  bool converged = false;      // validation accuracy fell below stop_accuracy
  int iterations = 0;
  double val_accuracy = 1.0;
};

namespace detail {

/// Top-k eigenvectors of a symmetric matrix.
inline Basis top_eigenvectors(const Eigen::MatrixXd& a, Index k) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (a + a.transpose()));
  return eig.eigenvectors().rightCols(k);
}

}  // namespace detail

/// Alternating minimax game between a linear spurious-label classifier on
/// Z (I - A) and a removal matrix A = U U^T, U orthonormal d x k. The
/// classifier takes one SGD step per iteration; A takes one gradient-ascent
/// step on the classifier loss and is then snapped back to the nearest rank-k
/// orthogonal projection (top-k eigenvectors). Every `evaluate_every`
/// iterations the current projection is scored on the validation split;
/// training stops once the classifier's accuracy drops below `stop_accuracy`.
inline RlaceResult rlace_fit(const LabeledEmbeddings& train, const LabeledEmbeddings& val, const RlaceConfig& cfg) {
  if (train.dim() != val.dim()) throw DataError("rlace_fit: train and validation dimensions differ");
  const Index d = train.dim();
  cfg.validate(d);
  const OptimizerConfig& opt = cfg.optimizer;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Matrix& x = train.z();
  const Vector y = labels_as_vector(train.y_sp());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  Eigen::MatrixXd a(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) a(r, c) = 0.1 * normal(rng);
  Vector theta = uniform_init(d + 1, d, rng);  // classifier [w, b]

  Eigen::MatrixXd a_vel = Eigen::MatrixXd::Zero(d, d);
  Vector c_vel = Vector::Zero(d + 1);
  bool a_first = true;
  bool c_first = true;

  std::vector<Index> perm(static_cast<std::size_t>(train.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  const auto batch = static_cast<std::size_t>(std::min<Index>(opt.batch_size, train.size()));
  auto draw_batch = [&]() {
    for (std::size_t k = 0; k < batch; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, perm.size() - 1);
      std::swap(perm[k], perm[pick(rng)]);
    }
    return std::span<const Index>(perm.data(), batch);
  };

  auto step = [&](auto& param, auto& vel, bool& first, const auto& grad) {
    if (first) {
      vel = grad;
      first = false;
    } else {
      vel = opt.momentum * vel + grad;
    }
    param -= opt.learning_rate * vel;
  };

  RlaceResult best;
  double best_loss = -1.0;
  RlaceResult out;
  Eigen::MatrixXd grad_a(d, d);
  Vector grad_c(d + 1);

  for (int it = 0; it < cfg.max_iters; ++it) {
    // Projection player: ascend the classifier loss.
    {
      const Eigen::MatrixXd as = 0.5 * (a + a.transpose());
      const Vector w = theta.head(d);
      const Vector aw = as * w;
      const double b = theta[d];
      Vector xr = Vector::Zero(d);
      const auto idx = draw_batch();
      for (Index i : idx) {
        const auto xi = x.row(i).transpose();
        const double p = sigmoid(xi.dot(w) - xi.dot(aw) + b);
        xr.noalias() += (p - y[i]) * xi;
      }
      xr /= static_cast<double>(idx.size());
      // d(loss)/dA = -xr w^T; the player minimizes -loss.
      grad_a = 0.5 * (xr * w.transpose() + w * xr.transpose());
      if (opt.weight_decay > 0.0) grad_a += opt.weight_decay * a;
      step(a, a_vel, a_first, grad_a);
      const Basis u = detail::top_eigenvectors(a, cfg.rank);
      a = u * u.transpose();
    }
    // Classifier player: descend on Z (I - A).
    {
      const Eigen::MatrixXd keep = eye - a;
      const auto idx = draw_batch();
      grad_c.setZero();
      const Vector w = theta.head(d);
      const Vector kw = keep * w;
      for (Index i : idx) {
        const auto xi = x.row(i).transpose();
        const double p = sigmoid(xi.dot(kw) + theta[d]);
        const double r = p - y[i];
        grad_c.head(d).noalias() += r * (keep * xi);
        grad_c[d] += r;
      }
      grad_c /= static_cast<double>(idx.size());
      if (opt.weight_decay > 0.0) grad_c += opt.weight_decay * theta;
      step(theta, c_vel, c_first, grad_c);
    }
    if (it % cfg.evaluate_every == 0) {
      const Basis u = detail::top_eigenvectors(a, cfg.rank);
      const Eigen::MatrixXd p = eye - u * u.transpose();
      const Vector logits = (val.z() * (p * theta.head(d))).array() + theta[d];
      const double acc = detail::accuracy_rate(logits, val.y_sp());
      double loss = 0.0;
      for (Index i = 0; i < logits.size(); ++i) loss += bce_single(sigmoid(logits[i]), val.y_sp()[static_cast<std::size_t>(i)]);
      loss /= static_cast<double>(logits.size());
      if (!std::isfinite(loss)) throw NumericalError("rlace_fit: non-finite validation loss");
      if (loss > best_loss) {
        best_loss = loss;
        best = RlaceResult{p, u, false, it + 1, acc};
      }
      if (it > 1 && acc < cfg.stop_accuracy) {
        out = RlaceResult{p, u, true, it + 1, acc};
        return out;
      }
    }
  }
  best.iterations = cfg.max_iters;
  return best;
}

/// Main-task logistic regression on the raw embeddings with class-balanced batches.
inline LinearModel erm_fit(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                           OptimizerConfig cfg = default_downstream_optimizer()) {
  cfg.balance = Sampling::class_balanced;
  return fit_logreg(train, Target::main_task, val, cfg);
}

/// Inverse group-frequency sampling weights normalized to mean 1.
inline std::vector<double> group_weights(const LabeledEmbeddings& train) {
  const auto counts = train.group_counts();
  for (std::size_t g = 0; g < 4; ++g)
    if (counts[g] == 0) throw EmptyGroupError("group_weights: training group " + std::to_string(g + 1) + " is empty");
  std::vector<double> w(static_cast<std::size_t>(train.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(train.group()[i] - 1)]);
    total += w[i];
  }
  const double scale = static_cast<double>(w.size()) / total;
  for (double& x : w) x *= scale;
  return w;
}

/// Main-task logistic regression with batches sampled so the four groups are
/// equally likely, i.e. p(y_mt | y_sp) = 0.5 and p(y_mt) = 0.5 in expectation.
inline LinearModel gw_erm_fit(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                              OptimizerConfig cfg = default_downstream_optimizer()) {
  cfg.balance = Sampling::group_balanced;
  return fit_logreg(train, Target::main_task, val, cfg);
}

}  // namespace jse
