#pragma once

// Embedding CSV files and PCA / demeaning preprocessing.
//
// Embedding file: header `y_mt,y_sp,z_0,...,z_{d-1}`, one sample per line.
// Values are written in shortest round-trip form, so export -> load is exact.

#include "jse/core_types.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace jse {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Shortest text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

inline void write_embeddings(std::ostream& os, const LabeledEmbeddings& data) {
  os << "y_mt,y_sp";
  for (Index k = 0; k < data.dim(); ++k) os << ",z_" << k;
  os << '\n';
  for (Index i = 0; i < data.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    os << data.y_mt()[ui] << ',' << data.y_sp()[ui];
    for (Index k = 0; k < data.dim(); ++k) os << ',' << detail::format_double(data.z()(i, k));
    os << '\n';
  }
}

inline void save_embeddings(const std::string& path, const LabeledEmbeddings& data) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_embeddings(os, data);
  if (!os) throw DataError("write failed for '" + path + "'");
}

/// Parses an embedding CSV. `name` prefixes error messages ("name:line: ...").
inline LabeledEmbeddings read_embeddings(std::istream& is, const std::string& name = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> DataError { return DataError(name + ":" + std::to_string(lineno) + ": " + msg); };

  if (!std::getline(is, line)) throw DataError(name + ": empty file");
  ++lineno;
  const auto header = detail::split(line, ',');
  if (header.size() < 3 || header[0] != "y_mt" || header[1] != "y_sp")
    throw fail("header must be y_mt,y_sp,z_0,...,z_{d-1}");
  const auto d = static_cast<Index>(header.size() - 2);
  for (Index k = 0; k < d; ++k)
    if (header[static_cast<std::size_t>(k + 2)] != "z_" + std::to_string(k))
      throw fail("expected column z_" + std::to_string(k) + ", found '" + header[static_cast<std::size_t>(k + 2)] + "'");

  std::vector<double> values;
  std::vector<int> y_mt, y_sp;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (static_cast<Index>(cells.size()) != d + 2)
      throw fail("expected " + std::to_string(d + 2) + " fields, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < 2; ++c) {
      const auto y = detail::parse_int(cells[c]);
      if (!y || (*y != 0 && *y != 1)) throw fail("label " + header[c] + " must be 0 or 1, found '" + cells[c] + "'");
      (c == 0 ? y_mt : y_sp).push_back(static_cast<int>(*y));
    }
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) throw fail("invalid value '" + cells[c] + "' in column " + header[c]);
      values.push_back(*v);
    }
  }
  const auto n = static_cast<Index>(y_mt.size());
  if (n == 0) throw DataError(name + ": no samples");
  Matrix z = Eigen::Map<const Matrix>(values.data(), n, d);
  return LabeledEmbeddings(std::move(z), std::move(y_mt), std::move(y_sp));
}

inline LabeledEmbeddings load_embeddings(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_embeddings(is, path);
}

/// Mean plus orthonormal components (d x k, descending variance). The
/// demean-only model uses the identity as components.
struct PcaModel {
  Vector mean;
  Basis components;
  Vector explained_variance;

  Index input_dim() const { return mean.size(); }
  Index k() const { return components.cols(); }
};

/// Principal components of the training matrix. Each component's sign is
/// fixed so its largest-magnitude entry is positive.
inline PcaModel pca_fit(const Matrix& z, Index k) {
  const Index n = z.rows();
  const Index d = z.cols();
  if (k < 1 || k > std::min(n, d))
    throw DataError("pca_fit: k=" + std::to_string(k) + " must be in [1, min(n, d)=" + std::to_string(std::min(n, d)) + "]");
  PcaModel m;
  m.mean = z.colwise().mean().transpose();
  const Eigen::MatrixXd centered = z.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<Index>(n - 1, 1));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_fit: eigendecomposition failed");
  m.components.resize(d, k);
  m.explained_variance.resize(k);
  for (Index j = 0; j < k; ++j) {
    const Index src = d - 1 - j;  // eigenvalues ascend
    Vector c = eig.eigenvectors().col(src);
    Index arg = 0;
    c.cwiseAbs().maxCoeff(&arg);
    if (c[arg] < 0.0) c = -c;
    m.components.col(j) = c;
    m.explained_variance[j] = std::max(eig.eigenvalues()[src], 0.0);
  }
  return m;
}

inline PcaModel demean_fit(const Matrix& z) {
  PcaModel m;
  m.mean = z.colwise().mean().transpose();
  m.components = Basis::Identity(z.cols(), z.cols());
  m.explained_variance = Vector::Zero(z.cols());
  return m;
}

inline Matrix pca_apply(const Matrix& z, const PcaModel& m) {
  if (z.cols() != m.input_dim())
    throw DataError("pca_apply: input has d=" + std::to_string(z.cols()) + ", model expects " + std::to_string(m.input_dim()));
  return (z.rowwise() - m.mean.transpose()) * m.components;
}

inline LabeledEmbeddings pca_apply(const LabeledEmbeddings& data, const PcaModel& m) {
  return data.with_z(pca_apply(data.z(), m));
}

}  // namespace jse
