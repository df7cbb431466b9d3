#pragma once

// Text artifact for a fitted method: optional preprocessing, the d x d
// transform, learned bases, JSE test reports and the downstream model.
//
//   jse-artifact 1
//   method jse
//   <key> <value>              scalar fields
//   matrix <name> <rows> <cols>
//   <rows lines of space-separated values>
//   test <role>,<outer>,<inner>,<accepted>,<kind>,<t>,<threshold>,<alpha>,<delta>,<side>,<decision>
//   end
//
// Numbers use shortest round-trip text, so save -> load is exact.

#include "jse/experiment.hpp"
#include "jse/io.hpp"

#include <map>

namespace jse {

inline constexpr int kArtifactVersion = 1;

enum class Preprocess { none, demean, pca };

inline const char* to_string(Preprocess p) {
  switch (p) {
    case Preprocess::none: return "none";
    case Preprocess::demean: return "demean";
    case Preprocess::pca: return "pca";
  }
  return "?";
}

struct Artifact {
  Preprocess preprocess = Preprocess::none;
  PcaModel pca;  // used unless preprocess == none
  FittedMethod fitted;
  TransformMode transform_mode = TransformMode::remove_sp;

  /// Embeddings as seen by the method (after preprocessing).
  LabeledEmbeddings prepare(const LabeledEmbeddings& raw) const {
    return preprocess == Preprocess::none ? raw : pca_apply(raw, pca);
  }
  /// Fully transformed embeddings fed to the downstream classifier.
  Matrix transform(const Matrix& raw) const {
    const Matrix z = preprocess == Preprocess::none ? raw : pca_apply(raw, pca);
    if (z.cols() != fitted.transform.rows())
      throw DataError("artifact expects d=" + std::to_string(fitted.transform.rows()) + " after preprocessing, got " +
                      std::to_string(z.cols()));
    return z * fitted.transform;
  }
  EvalSummary evaluate(const LabeledEmbeddings& raw_test) const {
    return jse::evaluate(fitted.downstream, raw_test.with_z(transform(raw_test.z())));
  }
};

namespace detail {

inline void write_matrix(std::ostream& os, const std::string& name, const Eigen::MatrixXd& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << format_double(m(r, c));
    os << '\n';
  }
}

inline void write_test(std::ostream& os, const char* role, const CandidateTests& t) {
  for (const TestReport* r : {&t.vs_random, &t.relative}) {
    os << "test " << role << ',' << t.outer << ',' << t.inner << ',' << (t.accepted ? 1 : 0) << ',' << to_string(r->kind)
       << ',' << format_double(r->statistic) << ',' << format_double(r->threshold) << ',' << format_double(r->alpha)
       << ',' << format_double(r->delta) << ',' << (r->side == Side::less ? "less" : "greater") << ','
       << (r->decision ? 1 : 0) << '\n';
  }
}

inline TestKind parse_test_kind(const std::string& s) {
  for (TestKind k : {TestKind::sp_vs_random, TestKind::mt_vs_random, TestKind::sp_vs_mt_on_vsp, TestKind::sp_vs_mt_on_vmt,
                     TestKind::inlp_vs_majority})
    if (s == to_string(k)) return k;
  throw DataError("unknown test kind '" + s + "'");
}

}  // namespace detail

inline void write_artifact(std::ostream& os, const Artifact& a) {
  const FittedMethod& f = a.fitted;
  os << "jse-artifact " << kArtifactVersion << '\n';
  os << "method " << to_string(f.method) << '\n';
  os << "preprocess " << to_string(a.preprocess) << '\n';
  os << "transform_mode " << to_string(a.transform_mode) << '\n';
  os << "d_sp_hat " << f.d_sp_hat << '\n';
  os << "d_mt_hat " << f.d_mt_hat << '\n';
  os << "converged " << (f.converged ? 1 : 0) << '\n';
  os << "downstream_b " << detail::format_double(f.downstream.b) << '\n';
  os << "downstream_degenerate " << (f.downstream.degenerate ? 1 : 0) << '\n';
  if (f.subspaces) {
    os << "termination " << to_string(f.subspaces->termination) << '\n';
    os << "delta " << detail::format_double(f.subspaces->delta) << '\n';
  }
  if (a.preprocess != Preprocess::none) {
    detail::write_matrix(os, "pre_mean", a.pca.mean);
    detail::write_matrix(os, "pre_components", a.pca.components);
    detail::write_matrix(os, "pre_variance", a.pca.explained_variance);
  }
  detail::write_matrix(os, "transform", f.transform);
  detail::write_matrix(os, "downstream_w", f.downstream.w);
  if (f.subspaces) {
    detail::write_matrix(os, "sp_basis", f.subspaces->sp_basis.v);
    detail::write_matrix(os, "mt_basis", f.subspaces->mt_basis.v);
    for (const auto& t : f.subspaces->sp_tests) detail::write_test(os, "sp", t);
    for (const auto& t : f.subspaces->mt_tests) detail::write_test(os, "mt", t);
  } else {
    detail::write_matrix(os, "removed", f.removed);
  }
  os << "end\n";
}

inline void save_artifact(const std::string& path, const Artifact& a) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_artifact(os, a);
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline Artifact read_artifact(std::istream& is, const std::string& name = "<artifact>") {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> DataError { return DataError(name + ":" + std::to_string(lineno) + ": " + msg); };
  Artifact a;
  std::map<std::string, std::string> scalars;
  std::map<std::string, Eigen::MatrixXd> matrices;
  std::vector<std::pair<std::string, std::vector<std::string>>> tests;

  if (!std::getline(is, line)) throw DataError(name + ": empty artifact");
  ++lineno;
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    if (!(hs >> magic >> version) || magic != "jse-artifact") throw fail("not a jse artifact");
    if (version != kArtifactVersion) throw fail("unsupported artifact version " + std::to_string(version));
  }
  bool ended = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(t);
    std::string key;
    ls >> key;
    if (key == "matrix") {
      std::string mname;
      Index rows = -1, cols = -1;
      if (!(ls >> mname >> rows >> cols) || rows < 0 || cols < 0) throw fail("malformed matrix header");
      Eigen::MatrixXd m(rows, cols);
      for (Index r = 0; r < rows; ++r) {
        if (!std::getline(is, line)) throw fail("truncated matrix " + mname);
        ++lineno;
        std::istringstream rs(line);
        for (Index c = 0; c < cols; ++c) {
          std::string tok;
          if (!(rs >> tok)) throw fail("matrix " + mname + ": row has too few values");
          const auto v = detail::parse_double(tok);
          if (!v) throw fail("matrix " + mname + ": invalid value '" + tok + "'");
          m(r, c) = *v;
        }
      }
      matrices[mname] = std::move(m);
    } else if (key == "test") {
      std::string rest;
      std::getline(ls, rest);
      auto fields = detail::split(detail::trim(rest), ',');
      if (fields.size() != 11) throw fail("test row needs 11 fields");
      tests.emplace_back(std::to_string(lineno), std::move(fields));
    } else {
      std::string value;
      std::getline(ls, value);
      scalars[key] = detail::trim(value);
    }
  }
  if (!ended) throw DataError(name + ": missing 'end' line");

  auto scalar = [&](const std::string& k) -> const std::string& {
    const auto it = scalars.find(k);
    if (it == scalars.end()) throw DataError(name + ": missing field '" + k + "'");
    return it->second;
  };
  auto matrix = [&](const std::string& k) -> const Eigen::MatrixXd& {
    const auto it = matrices.find(k);
    if (it == matrices.end()) throw DataError(name + ": missing matrix '" + k + "'");
    return it->second;
  };
  auto integer = [&](const std::string& k) {
    const auto v = detail::parse_int(scalar(k));
    if (!v) throw DataError(name + ": field '" + k + "' is not an integer");
    return *v;
  };
  auto real = [&](const std::string& k) {
    const auto v = detail::parse_double(scalar(k));
    if (!v) throw DataError(name + ": field '" + k + "' is not a number");
    return *v;
  };

  FittedMethod& f = a.fitted;
  f.method = parse_method(scalar("method"));
  const std::string& pre = scalar("preprocess");
  if (pre == "none") a.preprocess = Preprocess::none;
  else if (pre == "demean") a.preprocess = Preprocess::demean;
  else if (pre == "pca") a.preprocess = Preprocess::pca;
  else throw DataError(name + ": unknown preprocess '" + pre + "'");
  a.transform_mode = scalar("transform_mode") == "keep-mt" ? TransformMode::keep_mt : TransformMode::remove_sp;
  f.d_sp_hat = integer("d_sp_hat");
  f.d_mt_hat = integer("d_mt_hat");
  f.converged = integer("converged") != 0;
  f.downstream.b = real("downstream_b");
  f.downstream.degenerate = integer("downstream_degenerate") != 0;
  if (a.preprocess != Preprocess::none) {
    a.pca.mean = matrix("pre_mean").col(0);
    a.pca.components = matrix("pre_components");
    a.pca.explained_variance = matrix("pre_variance").col(0);
  }
  f.transform = matrix("transform");
  f.downstream.w = matrix("downstream_w").col(0);
  if (f.transform.rows() != f.transform.cols() || f.downstream.w.size() != f.transform.rows())
    throw DataError(name + ": inconsistent transform / model dimensions");
  if (f.method == Method::jse) {
    SubspaceResult s;
    s.sp_basis = SubspaceBasis(matrix("sp_basis"), BasisKind::spurious);
    s.mt_basis = SubspaceBasis(matrix("mt_basis"), BasisKind::main_task);
    const std::string& term = scalar("termination");
    if (term == "test-rejected") s.termination = Termination::test_rejected;
    else if (term == "dimension-exhausted") s.termination = Termination::dimension_exhausted;
    else if (term == "max-iterations") s.termination = Termination::max_iterations;
    else throw DataError(name + ": unknown termination '" + term + "'");
    s.delta = real("delta");
    for (std::size_t i = 0; i + 1 < tests.size(); i += 2) {
      CandidateTests ct;
      for (std::size_t h = 0; h < 2; ++h) {
        const auto& fields = tests[i + h].second;
        auto num = [&](std::size_t k) {
          const auto v = detail::parse_double(fields[k]);
          if (!v) throw DataError(name + ":" + tests[i + h].first + ": invalid number '" + fields[k] + "'");
          return *v;
        };
        TestReport r;
        r.kind = detail::parse_test_kind(fields[4]);
        r.statistic = num(5);
        r.threshold = num(6);
        r.alpha = num(7);
        r.delta = num(8);
        r.side = fields[9] == "less" ? Side::less : Side::greater;
        r.decision = fields[10] == "1";
        (h == 0 ? ct.vs_random : ct.relative) = r;
        ct.outer = static_cast<int>(num(1));
        ct.inner = static_cast<int>(num(2));
        ct.accepted = fields[3] == "1";
      }
      (tests[i].second[0] == "sp" ? s.sp_tests : s.mt_tests).push_back(std::move(ct));
    }
    f.subspaces = std::move(s);
  } else {
    f.removed = matrix("removed");
  }
  return a;
}

inline Artifact load_artifact(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_artifact(is, path);
}

}  // namespace jse
