#pragma once

// Logistic-regression training: a generic minibatch SGD driver with momentum,
// weight decay and validation early stopping, plus the three model families
// used throughout (full linear, 1-D along a fixed direction, and the jointly
// orthogonal spurious/main-task pair).

#include "jse/core_types.hpp"

#include <concepts>
#include <limits>
#include <numeric>
#include <random>

namespace jse {

inline constexpr double kProbClip = 1e-7;
inline constexpr double kProjectionEps = 1e-12;

enum class Sampling { none, class_balanced, group_balanced };

inline const char* to_string(Sampling s) {
  switch (s) {
    case Sampling::none: return "none";
    case Sampling::class_balanced: return "class-balanced";
    case Sampling::group_balanced: return "group-balanced";
  }
  return "unknown";
}

struct OptimizerConfig {
  double learning_rate = 1e-1;
  double weight_decay = 0.0;
  double momentum = 0.9;
  int batch_size = 128;
  int max_epochs = 50;
  int early_stop_patience = 5;
  std::uint64_t seed = 0;
  Sampling balance = Sampling::none;

  void validate() const {
    if (!(learning_rate > 0.0)) throw DataError("OptimizerConfig: learning_rate must be > 0");
    if (weight_decay < 0.0) throw DataError("OptimizerConfig: weight_decay must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw DataError("OptimizerConfig: momentum must be in [0,1)");
    if (batch_size < 1) throw DataError("OptimizerConfig: batch_size must be positive");
    if (max_epochs < 1) throw DataError("OptimizerConfig: max_epochs must be positive");
    if (early_stop_patience < 1 || early_stop_patience > max_epochs)
      throw DataError("OptimizerConfig: patience must be in [1, max_epochs]");
  }

  OptimizerConfig with_seed(std::uint64_t s) const {
    OptimizerConfig c = *this;
    c.seed = s;
    return c;
  }
};

struct LinearModel {
  Vector w;
  double b = 0.0;
  bool degenerate = false;  // single-class target: intercept-only fallback
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
  int epochs_run = 0;

  Vector logits(const Matrix& z) const {
    if (z.cols() != w.size()) throw DataError("LinearModel: dimension mismatch");
    return (z * w).array() + b;
  }
  Vector predict_proba(const Matrix& z) const;
};

inline double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

inline double clip_prob(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

inline double logit(double p) {
  p = clip_prob(p);
  return std::log(p / (1.0 - p));
}

inline double bce_single(double p, double y) {
  p = clip_prob(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

/// Per-sample binary cross-entropy with probabilities clipped to [1e-7, 1-1e-7].
inline Vector bce(const Vector& p, const Vector& y) {
  if (p.size() != y.size()) throw DataError("bce: length mismatch");
  Vector out(p.size());
  for (Index i = 0; i < p.size(); ++i) out[i] = bce_single(p[i], y[i]);
  return out;
}

inline Vector bce(const Vector& p, const std::vector<int>& y) { return bce(p, labels_as_vector(y)); }

inline Vector LinearModel::predict_proba(const Matrix& z) const {
  return logits(z).unaryExpr([](double a) { return sigmoid(a); });
}

inline double mean_bce(const Vector& p, const std::vector<int>& y) { return bce(p, y).mean(); }

// ---------------------------------------------------------------------------
// Batch sampling

/// Produces the minibatches of one epoch. Without balancing it shuffles a
/// permutation; balanced modes draw n indices with replacement using weights
/// inversely proportional to the size of each sample's class or group.
class BatchSampler {
 public:
  BatchSampler(Sampling mode, std::span<const int> strata, int batch_size)
      : mode_(mode), n_(static_cast<Index>(strata.size())), batch_size_(batch_size) {
    if (n_ == 0) throw DataError("BatchSampler: empty training set");
    if (mode_ == Sampling::none) return;
    std::array<std::size_t, 5> counts{};
    for (int s : strata) ++counts.at(static_cast<std::size_t>(s));
    weights_.resize(strata.size());
    for (std::size_t i = 0; i < strata.size(); ++i)
      weights_[i] = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(strata[i])]);
  }

  const std::vector<double>& weights() const { return weights_; }

  std::vector<std::vector<Index>> epoch(std::mt19937_64& rng) const {
    std::vector<Index> order(static_cast<std::size_t>(n_));
    if (mode_ == Sampling::none) {
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), rng);
    } else {
      std::discrete_distribution<Index> pick(weights_.begin(), weights_.end());
      for (auto& o : order) o = pick(rng);
    }
    std::vector<std::vector<Index>> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size_)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
  }

 private:
  Sampling mode_;
  Index n_;
  int batch_size_;
  std::vector<double> weights_;
};

/// Strata used by the sampler: the target label for class balancing, the
/// group id for group balancing.
inline BatchSampler make_sampler(const LabeledEmbeddings& train, Target target, const OptimizerConfig& cfg) {
  switch (cfg.balance) {
    case Sampling::group_balanced: {
      const auto counts = train.group_counts();
      for (std::size_t g = 0; g < 4; ++g)
        if (counts[g] == 0) throw EmptyGroupError("group-balanced sampling: training group " + std::to_string(g + 1) + " is empty");
      return BatchSampler(cfg.balance, train.group(), cfg.batch_size);
    }
    case Sampling::class_balanced: return BatchSampler(cfg.balance, train.labels(target), cfg.batch_size);
    case Sampling::none: break;
  }
  return BatchSampler(Sampling::none, train.labels(target), cfg.batch_size);
}

// ---------------------------------------------------------------------------
// Generic SGD driver

template <typename P>
concept SgdProblem = requires(const P& p, const Vector& theta, std::span<const Index> batch, Vector& grad) {
  { p.num_params() } -> std::convertible_to<Index>;
  { p.batch_loss_grad(theta, batch, grad) } -> std::convertible_to<double>;
  { p.validation_loss(theta) } -> std::convertible_to<double>;
};

struct SgdTrace {
  Vector best;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> val_history;
};

/// Minibatch SGD with heavy-ball momentum (buf = m*buf + g; theta -= lr*buf)
/// and L2 weight decay folded into the gradient. After each epoch the
/// validation loss is evaluated; the snapshot with the lowest loss is kept
/// (earliest on ties) and training stops after `patience` epochs without a
/// strict improvement.
template <SgdProblem P>
SgdTrace train_sgd(const P& problem, Vector theta, const BatchSampler& sampler, const OptimizerConfig& cfg,
                   std::mt19937_64& rng) {
  cfg.validate();
  SgdTrace trace;
  Vector velocity = Vector::Zero(theta.size());
  Vector grad(theta.size());
  bool first_step = true;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (const auto& batch : sampler.epoch(rng)) {
      problem.batch_loss_grad(theta, batch, grad);
      if (cfg.weight_decay > 0.0) grad += cfg.weight_decay * theta;
      if (first_step) {
        velocity = grad;
        first_step = false;
      } else {
        velocity = cfg.momentum * velocity + grad;
      }
      theta -= cfg.learning_rate * velocity;
    }
    const double val = problem.validation_loss(theta);
    if (!std::isfinite(val)) throw NumericalError("train_sgd: non-finite validation loss at epoch " + std::to_string(epoch));
    trace.val_history.push_back(val);
    trace.epochs_run = epoch;
    if (val < trace.best_val_loss) {
      trace.best_val_loss = val;
      trace.best = theta;
      trace.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return trace;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual linear-layer default.
inline Vector uniform_init(Index size, Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Vector out(size);
  for (Index i = 0; i < size; ++i) out[i] = u(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Problems

/// Mean BCE of a full linear model; parameters [w (d), b].
class LogregProblem {
 public:
  LogregProblem(const Matrix& x, const std::vector<int>& y, const Matrix& xv, const std::vector<int>& yv)
      : x_(x), y_(labels_as_vector(y)), xv_(xv), yv_(labels_as_vector(yv)) {}

  Index num_params() const { return x_.cols() + 1; }

  double batch_loss_grad(const Vector& theta, std::span<const Index> batch, Vector& grad) const {
    const Index d = x_.cols();
    const auto w = theta.head(d);
    const double b = theta[d];
    grad.setZero(theta.size());
    double loss = 0.0;
    for (Index i : batch) {
      const double p = sigmoid(x_.row(i).dot(w) + b);
      const double r = p - y_[i];
      grad.head(d).noalias() += r * x_.row(i).transpose();
      grad[d] += r;
      loss += bce_single(p, y_[i]);
    }
    const double m = static_cast<double>(batch.size());
    grad /= m;
    return loss / m;
  }

  double validation_loss(const Vector& theta) const { return mean_loss(xv_, yv_, theta); }

  static double mean_loss(const Matrix& x, const Vector& y, const Vector& theta) {
    const Index d = x.cols();
    const Vector a = (x * theta.head(d)).array() + theta[d];
    double loss = 0.0;
    for (Index i = 0; i < a.size(); ++i) loss += bce_single(sigmoid(a[i]), y[i]);
    return loss / static_cast<double>(a.size());
  }

 private:
  const Matrix& x_;
  Vector y_;
  const Matrix& xv_;
  Vector yv_;
};

/// 1-D logistic regression on a scalar feature; parameters [gamma, b].
class OneDimProblem {
 public:
  OneDimProblem(Vector s, const std::vector<int>& y, Vector sv, const std::vector<int>& yv)
      : s_(std::move(s)), y_(labels_as_vector(y)), sv_(std::move(sv)), yv_(labels_as_vector(yv)) {}

  Index num_params() const { return 2; }

  double batch_loss_grad(const Vector& theta, std::span<const Index> batch, Vector& grad) const {
    grad.setZero(2);
    double loss = 0.0;
    for (Index i : batch) {
      const double p = sigmoid(theta[0] * s_[i] + theta[1]);
      const double r = p - y_[i];
      grad[0] += r * s_[i];
      grad[1] += r;
      loss += bce_single(p, y_[i]);
    }
    const double m = static_cast<double>(batch.size());
    grad /= m;
    return loss / m;
  }

  double validation_loss(const Vector& theta) const {
    double loss = 0.0;
    for (Index i = 0; i < sv_.size(); ++i) loss += bce_single(sigmoid(theta[0] * sv_[i] + theta[1]), yv_[i]);
    return loss / static_cast<double>(sv_.size());
  }

  const Vector& feature() const { return s_; }
  const Vector& target() const { return y_; }

 private:
  Vector s_;
  Vector y_;
  Vector sv_;
  Vector yv_;
};

/// Two logistic regressions sharing the embeddings, with the main-task
/// weights made orthogonal to the spurious weights by construction:
///   p_sp = sigmoid(z' w_sp + b_sp)
///   p_mt = sigmoid(z' (I - P_wsp) w_mt + b_mt),  P_w = w w' / (w'w + 1e-12).
/// Objective: mean BCE(sp) + mean BCE(mt). Parameters [w_sp, b_sp, w_mt, b_mt].
class JointOrthogonalProblem {
 public:
  JointOrthogonalProblem(const Matrix& x, const std::vector<int>& y_sp, const std::vector<int>& y_mt, const Matrix& xv,
                         const std::vector<int>& yv_sp, const std::vector<int>& yv_mt)
      : x_(x),
        y_sp_(labels_as_vector(y_sp)),
        y_mt_(labels_as_vector(y_mt)),
        xv_(xv),
        yv_sp_(labels_as_vector(yv_sp)),
        yv_mt_(labels_as_vector(yv_mt)) {}

  Index dim() const { return x_.cols(); }
  Index num_params() const { return 2 * x_.cols() + 2; }

  /// (I - P_wsp) w_mt.
  static Vector effective_mt(const Vector& w_sp, const Vector& w_mt) {
    const double s = w_sp.squaredNorm() + kProjectionEps;
    return w_mt - w_sp * (w_sp.dot(w_mt) / s);
  }

  Vector effective_mt(const Vector& theta) const {
    const Index d = dim();
    return effective_mt(theta.head(d), theta.segment(d + 1, d));
  }

  double batch_loss_grad(const Vector& theta, std::span<const Index> batch, Vector& grad) const {
    const Index d = dim();
    const Vector w_sp = theta.head(d);
    const double b_sp = theta[d];
    const Vector w_mt = theta.segment(d + 1, d);
    const double b_mt = theta[2 * d + 1];
    const double s = w_sp.squaredNorm() + kProjectionEps;
    const double c = w_sp.dot(w_mt);
    const Vector u = w_mt - w_sp * (c / s);

    Vector g_sp = Vector::Zero(d);
    Vector g_u = Vector::Zero(d);
    double r_sp_sum = 0.0;
    double r_mt_sum = 0.0;
    double loss = 0.0;
    for (Index i : batch) {
      const auto zi = x_.row(i).transpose();
      const double p_sp = sigmoid(zi.dot(w_sp) + b_sp);
      const double p_mt = sigmoid(zi.dot(u) + b_mt);
      const double r_sp = p_sp - y_sp_[i];
      const double r_mt = p_mt - y_mt_[i];
      g_sp.noalias() += r_sp * zi;
      g_u.noalias() += r_mt * zi;
      r_sp_sum += r_sp;
      r_mt_sum += r_mt;
      loss += bce_single(p_sp, y_sp_[i]) + bce_single(p_mt, y_mt_[i]);
    }
    const double m = static_cast<double>(batch.size());
    g_sp /= m;
    g_u /= m;

    // Chain rule through u(w_sp, w_mt).
    const double wg = w_sp.dot(g_u);
    grad.resize(theta.size());
    grad.head(d) = g_sp - (c / s) * g_u - w_mt * (wg / s) + w_sp * (2.0 * c * wg / (s * s));
    grad[d] = r_sp_sum / m;
    grad.segment(d + 1, d) = g_u - w_sp * (wg / s);
    grad[2 * d + 1] = r_mt_sum / m;
    return loss / m;
  }

  double validation_loss(const Vector& theta) const { return loss_on(xv_, yv_sp_, yv_mt_, theta); }
  double training_loss(const Vector& theta) const { return loss_on(x_, y_sp_, y_mt_, theta); }

  static double loss_on(const Matrix& x, const Vector& y_sp, const Vector& y_mt, const Vector& theta) {
    const Index d = x.cols();
    const Vector u = effective_mt(theta.head(d), theta.segment(d + 1, d));
    const Vector a_sp = (x * theta.head(d)).array() + theta[d];
    const Vector a_mt = (x * u).array() + theta[2 * d + 1];
    double sp = 0.0;
    double mt = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
      sp += bce_single(sigmoid(a_sp[i]), y_sp[i]);
      mt += bce_single(sigmoid(a_mt[i]), y_mt[i]);
    }
    const double n = static_cast<double>(x.rows());
    return sp / n + mt / n;
  }

 private:
  const Matrix& x_;
  Vector y_sp_;
  Vector y_mt_;
  const Matrix& xv_;
  Vector yv_sp_;
  Vector yv_mt_;
};

// ---------------------------------------------------------------------------
// Fitting entry points

/// Intercept-only ("random") classifier: w = 0, b = logit of the class-1 rate.
inline LinearModel fit_intercept_only(const LabeledEmbeddings& train, Target target) {
  const auto& y = train.labels(target);
  if (y.empty()) throw DataError("fit_intercept_only: empty training set");
  const double rate = static_cast<double>(std::accumulate(y.begin(), y.end(), 0)) / static_cast<double>(y.size());
  LinearModel m;
  m.w = Vector::Zero(train.dim());
  m.b = logit(rate);
  return m;
}

inline bool single_class(const std::vector<int>& y) {
  return std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); });
}

/// Full logistic regression for one label, trained with the SGD protocol.
/// A single-class target returns the intercept-only fit flagged `degenerate`.
inline LinearModel fit_logreg(const LabeledEmbeddings& train, Target target, const LabeledEmbeddings& val,
                              const OptimizerConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw DataError("fit_logreg: empty training set");
  if (train.dim() != val.dim()) throw DataError("fit_logreg: train and validation dimensions differ");
  if (single_class(train.labels(target))) {
    LinearModel m = fit_intercept_only(train, target);
    m.degenerate = true;
    m.val_loss = mean_bce(m.predict_proba(val.z()), val.labels(target));
    return m;
  }
  std::mt19937_64 rng(cfg.seed);
  const Index d = train.dim();
  LogregProblem problem(train.z(), train.labels(target), val.z(), val.labels(target));
  Vector theta = uniform_init(d + 1, d, rng);
  const auto sampler = make_sampler(train, target, cfg);
  const SgdTrace trace = train_sgd(problem, std::move(theta), sampler, cfg, rng);
  LinearModel m;
  m.w = trace.best.head(d);
  m.b = trace.best[d];
  m.val_loss = trace.best_val_loss;
  m.best_epoch = trace.best_epoch;
  m.epochs_run = trace.epochs_run;
  return m;
}

enum class OneDimSolver { sgd, newton };

inline const char* to_string(OneDimSolver s) { return s == OneDimSolver::sgd ? "sgd" : "newton"; }

namespace detail {
// Damped Newton on [gamma, b]; stops on a tiny step or after 100 iterations.
inline Vector newton_1d(const Vector& s, const Vector& y, Vector theta) {
  for (int it = 0; it < 100; ++it) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    for (Index i = 0; i < s.size(); ++i) {
      const double p = sigmoid(theta[0] * s[i] + theta[1]);
      const double r = p - y[i];
      const double wgt = std::max(p * (1.0 - p), 1e-12);
      g += r * Eigen::Vector2d(s[i], 1.0);
      h(0, 0) += wgt * s[i] * s[i];
      h(0, 1) += wgt * s[i];
      h(1, 1) += wgt;
    }
    h(1, 0) = h(0, 1);
    h.diagonal().array() += 1e-10 * static_cast<double>(s.size());
    Eigen::Vector2d step = h.ldlt().solve(g);
    const double scale = std::max(1.0, step.norm() / 5.0);
    step /= scale;
    theta -= step;
    if (step.norm() < 1e-10) break;
  }
  return theta;
}
}  // namespace detail

/// Fits gamma and b of sigmoid(gamma * z'v + b) for label `y`, holding the
/// unit vector v fixed. A constant projected feature yields gamma = 0 with
/// the intercept-only b and the `degenerate` flag.
inline Direction fit_1d_logreg(const Matrix& z, const std::vector<int>& y, const Matrix& zv, const std::vector<int>& yv,
                               const Vector& v, const OptimizerConfig& cfg, OneDimSolver solver = OneDimSolver::sgd) {
  if (z.cols() != v.size() || zv.cols() != v.size()) throw DataError("fit_1d_logreg: dimension mismatch");
  if (std::abs(v.norm() - 1.0) > kConstructionTol) throw DataError("fit_1d_logreg: direction must be a unit vector");
  if (z.rows() == 0) throw DataError("fit_1d_logreg: empty training set");
  Vector s = z * v;
  Vector sv = zv * v;
  const double mean = s.mean();
  const double var = (s.array() - mean).square().mean();
  const double rate = static_cast<double>(std::accumulate(y.begin(), y.end(), 0)) / static_cast<double>(y.size());
  if (var < 1e-20 || single_class(y)) return Direction{v, 0.0, logit(rate), true};

  std::mt19937_64 rng(cfg.seed);
  Vector theta = uniform_init(2, 1, rng);
  if (solver == OneDimSolver::newton) {
    theta = detail::newton_1d(s, labels_as_vector(y), Vector::Zero(2));
    return Direction{v, theta[0], theta[1], false};
  }
  OneDimProblem problem(std::move(s), y, std::move(sv), yv);
  const BatchSampler sampler(Sampling::none, y, cfg.batch_size);
  const SgdTrace trace = train_sgd(problem, std::move(theta), sampler, cfg, rng);
  return Direction{v, trace.best[0], trace.best[1], false};
}

/// Probabilities of a 1-D model along its direction.
inline Vector predict_proba(const Direction& dir, const Matrix& z) {
  const Vector s = z * dir.v;
  return s.unaryExpr([&](double x) { return sigmoid(dir.gamma * x + dir.b); });
}

struct JointFit {
  LinearModel sp;
  LinearModel mt;  // stores the effective (already orthogonalized) weights
  double val_loss = 0.0;
  int best_epoch = 0;
};

/// Jointly fits the spurious and main-task logistic regressions under the
/// orthogonality reparameterization. Initial weights are drawn in the
/// orthogonal complement of `removed` (directions already projected out of
/// `train`), so the returned weights stay in that complement.
inline JointFit fit_joint_orthogonal(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                                     const OptimizerConfig& cfg, const Basis& removed = Basis()) {
  cfg.validate();
  if (train.size() == 0) throw DataError("fit_joint_orthogonal: empty training set");
  if (train.dim() != val.dim()) throw DataError("fit_joint_orthogonal: train and validation dimensions differ");
  if (single_class(train.y_sp()) || single_class(train.y_mt()))
    throw DataError("fit_joint_orthogonal: both labels need both classes");
  const Index d = train.dim();
  std::mt19937_64 rng(cfg.seed);
  Vector theta = uniform_init(2 * d + 2, d, rng);
  if (removed.cols() > 0) {
    if (removed.rows() != d) throw DataError("fit_joint_orthogonal: removed basis has wrong dimension");
    theta.head(d) = orthogonalize_against(theta.head(d), removed);
    theta.segment(d + 1, d) = orthogonalize_against(theta.segment(d + 1, d), removed);
  }
  JointOrthogonalProblem problem(train.z(), train.y_sp(), train.y_mt(), val.z(), val.y_sp(), val.y_mt());
  // The sampler balances on the spurious label only when asked; default is a plain shuffle.
  const auto sampler = make_sampler(train, Target::spurious, cfg);
  const SgdTrace trace = train_sgd(problem, std::move(theta), sampler, cfg, rng);

  JointFit fit;
  fit.sp.w = trace.best.head(d);
  fit.sp.b = trace.best[d];
  fit.mt.w = problem.effective_mt(trace.best);
  fit.mt.b = trace.best[2 * d + 1];
  if (removed.cols() > 0) {
    fit.sp.w = orthogonalize_against(fit.sp.w, removed);
    fit.mt.w = orthogonalize_against(fit.mt.w, removed);
  }
  // Clean up round-off so the pair is orthogonal to working precision.
  const double ss = fit.sp.w.squaredNorm();
  if (ss > 0.0) fit.mt.w -= fit.sp.w * (fit.sp.w.dot(fit.mt.w) / ss);
  fit.val_loss = trace.best_val_loss;
  fit.best_epoch = trace.best_epoch;
  fit.sp.val_loss = fit.mt.val_loss = trace.best_val_loss;
  fit.sp.best_epoch = fit.mt.best_epoch = trace.best_epoch;
  fit.sp.epochs_run = fit.mt.epochs_run = trace.epochs_run;
  return fit;
}

}  // namespace jse
