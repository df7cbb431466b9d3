#pragma once

// Long-form results CSV, plot-ready TSV, JSON-lines evaluation records and
// text tables summarizing a results file.

#include "jse/experiment.hpp"
#include "jse/io.hpp"

#include <nlohmann/json.hpp>

#include <iomanip>
#include <map>

namespace jse {

inline constexpr int kResultsSchemaVersion = 1;

inline constexpr const char* kResultsHeader =
    "method,x_name,x_value,seed,acc_g1,acc_g2,acc_g3,acc_g4,worst_group,average,macro_average,d_sp_hat,d_mt_hat,"
    "runtime_ms,error,schema_version";

namespace detail {
/// Quotes a CSV field when needed.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return q + "\"";
}

/// Splits one CSV line honoring double quotes.
inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}
}  // namespace detail

/// Writes run records. `with_runtime` = false blanks the runtime column so
/// repeated runs produce byte-identical files.
inline void write_results_csv(std::ostream& os, std::span<const RunRecord> runs, bool with_runtime = true) {
  os << kResultsHeader << '\n';
  for (const auto& r : runs) {
    os << to_string(r.method) << ',' << r.x_name << ',' << detail::format_double(r.x_value) << ',' << r.seed;
    for (double g : r.summary.group_acc) os << ',' << detail::format_double(g);
    os << ',' << detail::format_double(r.summary.worst_group) << ',' << detail::format_double(r.summary.average) << ','
       << detail::format_double(r.summary.macro_average) << ',' << r.d_sp_hat << ',' << r.d_mt_hat << ',';
    if (with_runtime) {
      std::ostringstream ms;
      ms << std::fixed << std::setprecision(3) << r.runtime_ms;
      os << ms.str();
    }
    os << ',' << detail::csv_field(r.error) << ',' << kResultsSchemaVersion << '\n';
  }
}

inline std::vector<RunRecord> read_results_csv(std::istream& is, const std::string& name = "<results>") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw DataError(name + ": empty results file");
  ++lineno;
  if (detail::trim(line) != kResultsHeader) throw DataError(name + ":1: unexpected results header");
  std::vector<RunRecord> runs;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::csv_split(line);
    auto fail = [&](const std::string& msg) { return DataError(name + ":" + std::to_string(lineno) + ": " + msg); };
    if (f.size() != 16) throw fail("expected 16 fields, found " + std::to_string(f.size()));
    auto num = [&](std::size_t k) {
      const auto v = detail::parse_double(f[k]);
      if (!v) throw fail("invalid number '" + f[k] + "'");
      return *v;
    };
    RunRecord r;
    r.method = parse_method(f[0]);
    r.x_name = f[1];
    r.x_value = num(2);
    r.seed = static_cast<int>(num(3));
    for (std::size_t g = 0; g < 4; ++g) r.summary.group_acc[g] = num(4 + g);
    r.summary.worst_group = num(8);
    r.summary.average = num(9);
    r.summary.macro_average = num(10);
    r.d_sp_hat = static_cast<Index>(num(11));
    r.d_mt_hat = static_cast<Index>(num(12));
    r.runtime_ms = f[13].empty() ? 0.0 : num(13);
    r.error = f[14];
    if (num(15) != kResultsSchemaVersion) throw fail("unsupported schema_version " + f[15]);
    runs.push_back(std::move(r));
  }
  return runs;
}

/// Re-aggregates run records into cells ordered by (x, method) in first-seen order.
inline std::vector<CellAggregate> aggregate_runs(std::span<const RunRecord> runs, double min_success = 0.9) {
  std::vector<std::pair<double, Method>> keys;
  std::vector<double> xs;
  std::vector<Method> methods;
  for (const auto& r : runs) {
    if (std::find(xs.begin(), xs.end(), r.x_value) == xs.end()) xs.push_back(r.x_value);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::vector<CellAggregate> cells;
  for (double x : xs)
    for (Method m : methods) {
      const bool present = std::any_of(runs.begin(), runs.end(), [&](const RunRecord& r) { return r.method == m && r.x_value == x; });
      if (present) cells.push_back(aggregate_cell(m, runs.front().x_name, x, runs, min_success));
    }
  return cells;
}

/// Plot rows (x, method, mean, ci_low, ci_high, metric) for average and worst-group accuracy.
inline void write_plot_tsv(std::ostream& os, std::span<const CellAggregate> cells) {
  os << "x\tmethod\tmean\tci_low\tci_high\tmetric\n";
  for (const char* metric : {"average", "worst_group"}) {
    for (const auto& c : cells) {
      if (!c.aggregated) continue;
      const Stat& s = std::string_view(metric) == "average" ? c.average : c.worst_group;
      os << detail::format_double(c.x_value) << '\t' << to_string(c.method) << '\t' << detail::format_double(s.mean)
         << '\t' << detail::format_double(s.mean - s.ci_half()) << '\t' << detail::format_double(s.mean + s.ci_half())
         << '\t' << metric << '\n';
    }
  }
}

/// Per-cell summary CSV with mean, standard error and failure counts.
inline void write_cells_csv(std::ostream& os, std::span<const CellAggregate> cells) {
  os << "method,x_name,x_value,runs,failures,average_mean,average_se,worst_group_mean,worst_group_se,"
        "macro_average_mean,d_sp_hat_mean,error,schema_version\n";
  auto se = [](const Stat& s) { return s.se ? detail::format_double(*s.se) : std::string("NA"); };
  for (const auto& c : cells) {
    os << to_string(c.method) << ',' << c.x_name << ',' << detail::format_double(c.x_value) << ',' << c.runs << ','
       << c.failures << ',';
    if (c.aggregated) {
      os << detail::format_double(c.average.mean) << ',' << se(c.average) << ','
         << detail::format_double(c.worst_group.mean) << ',' << se(c.worst_group) << ','
         << detail::format_double(c.macro_average.mean) << ',' << detail::format_double(c.d_sp_hat.mean);
    } else {
      os << "NA,NA,NA,NA,NA,NA";
    }
    os << ',' << detail::csv_field(c.error) << ',' << kResultsSchemaVersion << '\n';
  }
}

/// One table per grid value: rows are average, worst-group and the four
/// groups; columns are methods; entries are "mean (se)".
inline void write_report(std::ostream& os, std::span<const CellAggregate> cells) {
  std::vector<double> xs;
  std::vector<Method> methods;
  for (const auto& c : cells) {
    if (std::find(xs.begin(), xs.end(), c.x_value) == xs.end()) xs.push_back(c.x_value);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  }
  auto entry = [](const Stat& s) {
    std::ostringstream e;
    e << std::fixed << std::setprecision(2) << s.mean;
    if (s.se) e << " (" << std::setprecision(2) << *s.se << ")";
    return e.str();
  };
  constexpr int kLabel = 22;
  constexpr int kCol = 16;
  for (double x : xs) {
    const std::string x_name = cells.empty() ? "x" : cells.front().x_name;
    os << x_name << " = " << detail::format_double(x) << '\n';
    os << std::left << std::setw(kLabel) << "";
    for (Method m : methods) os << std::right << std::setw(kCol) << to_string(m);
    os << '\n';
    const std::array<std::string, 6> labels{"Average", "Worst-group", "G1 (y_mt=0, y_sp=0)", "G2 (y_mt=0, y_sp=1)",
                                            "G3 (y_mt=1, y_sp=0)", "G4 (y_mt=1, y_sp=1)"};
    for (std::size_t row = 0; row < labels.size(); ++row) {
      os << std::left << std::setw(kLabel) << labels[row];
      for (Method m : methods) {
        const auto it = std::find_if(cells.begin(), cells.end(),
                                     [&](const CellAggregate& c) { return c.method == m && c.x_value == x; });
        std::string text = "-";
        if (it != cells.end() && it->aggregated) {
          const Stat& s = row == 0 ? it->average : row == 1 ? it->worst_group : it->group_acc[row - 2];
          text = entry(s);
        } else if (it != cells.end()) {
          text = "failed";
        }
        os << std::right << std::setw(kCol) << text;
      }
      os << '\n';
    }
    os << '\n';
  }
}

/// One JSON-lines evaluation record.
inline nlohmann::json eval_record(const EvalSummary& s, const std::string& method, const std::string& test_path) {
  nlohmann::json j;
  j["schema_version"] = kResultsSchemaVersion;
  j["method"] = method;
  j["test"] = test_path;
  j["group_acc"] = s.group_acc;
  j["n_per_group"] = s.n_per_group;
  j["worst_group"] = s.worst_group;
  j["average"] = s.average;
  j["macro_average"] = s.macro_average;
  return j;
}

}  // namespace jse
