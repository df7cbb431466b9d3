#pragma once

// Gaussian toy benchmark: z ~ N(0, Sigma) with Sigma = I except a 2x2 block
// [[1, rho], [rho, 1]] on the first two coordinates, and labels drawn from
// logit models along w_sp and w_mt.

#include "jse/core_types.hpp"
#include "jse/logreg.hpp"

#include <numbers>
#include <random>

namespace jse {

struct ToyConfig {
  Index n = 2000;
  Index d = 20;
  double rho = 0.0;
  double gamma_sp = 3.0;
  double gamma_mt = 3.0;
  double b_sp = 0.0;
  double b_mt = 0.0;
  double angle_deg = 90.0;  // angle between w_sp and w_mt
  double split_fraction = 0.8;
  Index n_test = 0;  // 0: same size as n
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw DataError("ToyConfig: n must be >= 2");
    if (d < 2) throw DataError("ToyConfig: d must be >= 2");
    if (!(std::abs(rho) < 1.0)) throw DataError("ToyConfig: |rho| must be < 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw DataError("ToyConfig: split_fraction must be in (0,1)");
    if (!(angle_deg > 0.0 && angle_deg <= 90.0)) throw DataError("ToyConfig: angle_deg must be in (0, 90]");
    if (n_test < 0) throw DataError("ToyConfig: n_test must be >= 0");
  }

  Index test_size() const { return n_test > 0 ? n_test : n; }
};

struct ToySplits {
  LabeledEmbeddings train;
  LabeledEmbeddings val;
};

inline Vector toy_w_sp(const ToyConfig& cfg) {
  Vector w = Vector::Zero(cfg.d);
  w[0] = cfg.gamma_sp;
  return w;
}

/// Main-task weights. For 90 degrees this is gamma_mt * e2; otherwise, with
/// phi = 90 - angle, a = cos(phi), b = sin(phi):
///   w_mt = (gamma / (1 + a/b), gamma / (1 + b/a), 0, ..., 0),
/// written as (gamma b, gamma a) / (a + b) to stay finite at b = 0.
inline Vector toy_w_mt(const ToyConfig& cfg) {
  const double phi = (90.0 - cfg.angle_deg) * std::numbers::pi / 180.0;
  const double a = std::cos(phi);
  const double b = std::sin(phi);
  Vector w = Vector::Zero(cfg.d);
  w[0] = cfg.gamma_mt * b / (a + b);
  w[1] = cfg.gamma_mt * a / (a + b);
  return w;
}

inline Eigen::MatrixXd toy_covariance(Index d, double rho) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d, d);
  sigma(0, 1) = sigma(1, 0) = rho;
  return sigma;
}

namespace detail {
inline LabeledEmbeddings draw_toy(const ToyConfig& cfg, double rho, Index n, std::uint64_t seed) {
  const Eigen::MatrixXd sigma = toy_covariance(cfg.d, rho);
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("toy generator: covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  const Vector w_sp = toy_w_sp(cfg);
  const Vector w_mt = toy_w_mt(cfg);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix z(n, cfg.d);
  std::vector<int> y_mt(static_cast<std::size_t>(n));
  std::vector<int> y_sp(static_cast<std::size_t>(n));
  Vector e(cfg.d);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < cfg.d; ++k) e[k] = normal(rng);
    const Vector zi = lower * e;
    z.row(i) = zi.transpose();
    y_sp[static_cast<std::size_t>(i)] = unif(rng) < sigmoid(zi.dot(w_sp) + cfg.b_sp) ? 1 : 0;
    y_mt[static_cast<std::size_t>(i)] = unif(rng) < sigmoid(zi.dot(w_mt) + cfg.b_mt) ? 1 : 0;
  }
  return LabeledEmbeddings(std::move(z), std::move(y_mt), std::move(y_sp));
}
}  // namespace detail

/// Training and validation splits (split_fraction / rest) of n draws at cfg.rho.
inline ToySplits gen_toy(const ToyConfig& cfg) {
  cfg.validate();
  const LabeledEmbeddings all = detail::draw_toy(cfg, cfg.rho, cfg.n, cfg.seed);
  const auto n_train = static_cast<Index>(std::llround(cfg.split_fraction * static_cast<double>(cfg.n)));
  if (n_train < 1 || n_train >= cfg.n) throw DataError("gen_toy: split leaves an empty partition");
  const Index n_val = cfg.n - n_train;
  auto slice = [&](Index start, Index count) {
    std::vector<int> mt(all.y_mt().begin() + start, all.y_mt().begin() + start + count);
    std::vector<int> sp(all.y_sp().begin() + start, all.y_sp().begin() + start + count);
    return LabeledEmbeddings(all.z().middleRows(start, count), std::move(mt), std::move(sp));
  };
  return ToySplits{slice(0, n_train), slice(n_train, n_val)};
}

/// Out-of-distribution test set: same directions and scales, rho forced to 0.
inline LabeledEmbeddings gen_toy_test(const ToyConfig& cfg) {
  cfg.validate();
  return detail::draw_toy(cfg, 0.0, cfg.test_size(), derive_seed(cfg.seed, 0x7e57u));
}

}  // namespace jse
