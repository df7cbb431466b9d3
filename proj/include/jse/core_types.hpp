#pragma once

// Shared data model: labeled embeddings, directions, subspace bases, and the
// projection primitives every removal method is built from.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jse {

// Samples are rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Bases are stored column-wise (d x k).
using Basis = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kOrthonormalTol = 1e-6;
inline constexpr double kConstructionTol = 1e-8;

// Error hierarchy. The CLI maps DataError to exit code 3 and NumericalError to 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class EmptyGroupError : public DataError {
 public:
  using DataError::DataError;
};

enum class Target { main_task, spurious };

inline const char* to_string(Target t) { return t == Target::main_task ? "mt" : "sp"; }

/// Group id in {1,2,3,4} for a (y_mt, y_sp) pair: (0,0)->1, (0,1)->2, (1,0)->3, (1,1)->4.
inline int group_of(int y_mt, int y_sp) { return 1 + 2 * y_mt + y_sp; }

inline std::vector<int> make_group_ids(std::span<const int> y_mt, std::span<const int> y_sp) {
  if (y_mt.size() != y_sp.size())
    throw DataError("make_group_ids: label length mismatch (" + std::to_string(y_mt.size()) + " vs " +
                    std::to_string(y_sp.size()) + ")");
  std::vector<int> group(y_mt.size());
  for (std::size_t i = 0; i < y_mt.size(); ++i) {
    if ((y_mt[i] != 0 && y_mt[i] != 1) || (y_sp[i] != 0 && y_sp[i] != 1))
      throw DataError("make_group_ids: non-binary label at index " + std::to_string(i));
    group[i] = group_of(y_mt[i], y_sp[i]);
  }
  return group;
}

/// An n x d embedding matrix with main-task and spurious binary labels.
/// Group ids are derived on construction and never set independently.
class LabeledEmbeddings {
 public:
  LabeledEmbeddings() = default;

  LabeledEmbeddings(Matrix z, std::vector<int> y_mt, std::vector<int> y_sp)
      : z_(std::move(z)), y_mt_(std::move(y_mt)), y_sp_(std::move(y_sp)) {
    if (z_.rows() < 1 || z_.cols() < 1) throw DataError("LabeledEmbeddings: need n >= 1 and d >= 1");
    if (static_cast<Index>(y_mt_.size()) != z_.rows() || static_cast<Index>(y_sp_.size()) != z_.rows())
      throw DataError("LabeledEmbeddings: label count does not match number of rows");
    group_ = make_group_ids(y_mt_, y_sp_);
  }

  Index size() const { return z_.rows(); }
  Index dim() const { return z_.cols(); }
  const Matrix& z() const { return z_; }
  const std::vector<int>& y_mt() const { return y_mt_; }
  const std::vector<int>& y_sp() const { return y_sp_; }
  const std::vector<int>& group() const { return group_; }
  const std::vector<int>& labels(Target t) const { return t == Target::main_task ? y_mt_ : y_sp_; }

  /// Same labels, different embeddings (e.g. after a projection).
  LabeledEmbeddings with_z(Matrix z) const {
    if (z.rows() != z_.rows()) throw DataError("with_z: row count changed");
    LabeledEmbeddings out;
    out.z_ = std::move(z);
    out.y_mt_ = y_mt_;
    out.y_sp_ = y_sp_;
    out.group_ = group_;
    return out;
  }

  /// Labels with mt and sp columns exchanged; groups are recomputed.
  LabeledEmbeddings swapped_labels() const { return LabeledEmbeddings(z_, y_sp_, y_mt_); }

  std::array<std::size_t, 4> group_counts() const {
    std::array<std::size_t, 4> c{};
    for (int g : group_) ++c[static_cast<std::size_t>(g - 1)];
    return c;
  }

 private:
  Matrix z_;
  std::vector<int> y_mt_;
  std::vector<int> y_sp_;
  std::vector<int> group_;
};

inline Vector labels_as_vector(const std::vector<int>& y) {
  Vector out(static_cast<Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) out[static_cast<Index>(i)] = y[i];
  return out;
}

/// Unit direction with the scale and intercept of a 1-D logistic fit along it.
struct Direction {
  Vector v;
  double gamma = 0.0;
  double b = 0.0;
  bool degenerate = false;  // constant projected feature; gamma forced to 0

  static Direction from_weights(const Vector& w, double b) {
    const double norm = w.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("Direction: zero or non-finite weight vector");
    return Direction{w / norm, norm, b, false};
  }
};

enum class BasisKind { spurious, main_task };

inline const char* to_string(BasisKind k) { return k == BasisKind::spurious ? "spurious" : "main-task"; }

/// True iff max |V^T V - I| <= tol. An empty basis is trivially orthonormal.
inline bool orthonormal_check(const Basis& v, double tol) {
  if (v.cols() == 0) return true;
  const Eigen::MatrixXd gram = v.transpose() * v;
  const double err = (gram - Eigen::MatrixXd::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
  return err <= tol;
}

struct SubspaceBasis {
  Basis v;  // d x k
  BasisKind kind = BasisKind::spurious;

  SubspaceBasis() = default;
  SubspaceBasis(Basis basis, BasisKind k) : v(std::move(basis)), kind(k) {
    if (!orthonormal_check(v, kOrthonormalTol)) throw NumericalError("SubspaceBasis: columns are not orthonormal");
  }
  static SubspaceBasis empty(Index d, BasisKind k) { return SubspaceBasis(Basis(d, 0), k); }

  Index dim() const { return v.rows(); }
  Index rank() const { return v.cols(); }
};

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns whose
/// residual norm falls below `drop_tol` (relative) are discarded.
inline Basis gram_schmidt(const Basis& a, double drop_tol = 1e-10) {
  Basis q(a.rows(), 0);
  for (Index c = 0; c < a.cols(); ++c) {
    Vector v = a.col(c);
    const double n0 = v.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Index k = 0; k < q.cols(); ++k) v -= q.col(k).dot(v) * q.col(k);
    const double n1 = v.norm();
    if (n0 == 0.0 || n1 <= drop_tol * n0) continue;
    q.conservativeResize(Eigen::NoChange, q.cols() + 1);
    q.col(q.cols() - 1) = v / n1;
  }
  return q;
}

/// Removes from `v` its components along the (orthonormal) columns of `basis`.
inline Vector orthogonalize_against(Vector v, const Basis& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (Index k = 0; k < basis.cols(); ++k) v -= basis.col(k).dot(v) * basis.col(k);
  return v;
}

/// Appends a unit column to an orthonormal basis.
inline Basis append_column(const Basis& basis, const Vector& v) {
  Basis out(basis.rows(), basis.cols() + 1);
  out.leftCols(basis.cols()) = basis;
  out.col(basis.cols()) = v;
  return out;
}

/// Horizontal concatenation of two bases with equal row count.
inline Basis concat(const Basis& a, const Basis& b) {
  Basis out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

namespace detail {
inline void check_projection_args(const Matrix& z, const Basis& v, const char* who) {
  if (v.cols() == 0) return;
  if (v.rows() != z.cols())
    throw DataError(std::string(who) + ": dimension mismatch (Z has d=" + std::to_string(z.cols()) +
                    ", basis has d=" + std::to_string(v.rows()) + ")");
  if (!orthonormal_check(v, kOrthonormalTol)) throw NumericalError(std::string(who) + ": basis is not orthonormal");
}
}  // namespace detail

/// Z (I - V V^T). k = 0 is the identity.
inline Matrix project_out(const Matrix& z, const Basis& v) {
  detail::check_projection_args(z, v, "project_out");
  if (v.cols() == 0) return z;
  return z - (z * v) * v.transpose();
}

/// Z V V^T.
inline Matrix project_onto(const Matrix& z, const Basis& v) {
  detail::check_projection_args(z, v, "project_onto");
  if (v.cols() == 0) return Matrix::Zero(z.rows(), z.cols());
  return (z * v) * v.transpose();
}

enum class TestKind { sp_vs_random, mt_vs_random, sp_vs_mt_on_vsp, sp_vs_mt_on_vmt, inlp_vs_majority };

inline const char* to_string(TestKind k) {
  switch (k) {
    case TestKind::sp_vs_random: return "sp_vs_random";
    case TestKind::mt_vs_random: return "mt_vs_random";
    case TestKind::sp_vs_mt_on_vsp: return "sp_vs_mt_on_vsp";
    case TestKind::sp_vs_mt_on_vmt: return "sp_vs_mt_on_vmt";
    case TestKind::inlp_vs_majority: return "inlp_vs_majority";
  }
  return "unknown";
}

enum class Side { less, greater };

/// Outcome of one one-sided hypothesis test on a (group-weighted) BCE difference.
struct TestReport {
  TestKind kind = TestKind::sp_vs_random;
  double statistic = 0.0;
  double threshold = 0.0;  // t_{1-alpha}
  double alpha = 0.05;
  double delta = 0.0;
  Side side = Side::less;
  bool decision = false;  // alternative accepted
  double d_bar = 0.0;
  double var_hat = 0.0;
};

/// Tests run on one candidate vector during a JSE loop.
struct CandidateTests {
  Vector v;
  int outer = 0;
  int inner = 0;
  TestReport vs_random;
  TestReport relative;
  bool accepted = false;
};

enum class Termination { test_rejected, dimension_exhausted, max_iterations };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::test_rejected: return "test-rejected";
    case Termination::dimension_exhausted: return "dimension-exhausted";
    case Termination::max_iterations: return "max-iterations";
  }
  return "unknown";
}

struct SubspaceResult {
  SubspaceBasis sp_basis;
  SubspaceBasis mt_basis;
  std::vector<CandidateTests> sp_tests;
  std::vector<CandidateTests> mt_tests;
  Termination termination = Termination::test_rejected;
  double delta = 0.0;  // offset used by the relative tests

  Index d_sp() const { return sp_basis.rank(); }
  Index d_mt() const { return mt_basis.rank(); }
};

/// SplitMix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t s = mix_seed(base);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

}  // namespace jse
