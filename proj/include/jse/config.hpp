#pragma once

// Line-oriented `key = value` configuration with [section] headers. The
// grammar is documented in docs/config.md.

#include "jse/experiment.hpp"
#include "jse/io.hpp"

#include <map>

namespace jse {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct ConfigFile {
  std::string name;
  std::map<std::string, std::vector<ConfigEntry>> sections;
};

inline ConfigFile parse_config(std::istream& is, const std::string& name = "<config>") {
  ConfigFile cfg;
  cfg.name = name;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw DataError(name + ":" + std::to_string(lineno) + ": malformed section header '" + t + "'");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError(name + ":" + std::to_string(lineno) + ": expected key = value");
    ConfigEntry e{detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1)),
                  lineno};
    if (e.key.empty()) throw DataError(name + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty()) throw DataError(name + ":" + std::to_string(lineno) + ": key '" + e.key + "' outside a section");
    cfg.sections[section].push_back(std::move(e));
  }
  return cfg;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config '" + path + "'");
  return parse_config(is, path);
}

namespace detail {

class EntryReader {
 public:
  EntryReader(const ConfigFile& f, const std::string& section, const ConfigEntry& e) : f_(f), section_(section), e_(e) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(f_.name + ":" + std::to_string(e_.line) + ": [" + section_ + "] " + e_.key + ": " + msg);
  }
  double real() const {
    const auto v = parse_double(e_.value);
    if (!v) fail("expected a number, found '" + e_.value + "'");
    return *v;
  }
  long long integer() const {
    const auto v = parse_int(e_.value);
    if (!v) fail("expected an integer, found '" + e_.value + "'");
    return *v;
  }
  bool boolean() const {
    if (e_.value == "true" || e_.value == "1") return true;
    if (e_.value == "false" || e_.value == "0") return false;
    fail("expected true or false, found '" + e_.value + "'");
  }
  const std::string& text() const { return e_.value; }
  std::vector<std::string> list() const {
    auto items = split(e_.value, ',');
    std::erase_if(items, [](const std::string& s) { return s.empty(); });
    return items;
  }

 private:
  const ConfigFile& f_;
  const std::string& section_;
  const ConfigEntry& e_;
};

inline void apply_optimizer(const EntryReader& r, const std::string& key, OptimizerConfig& o) {
  if (key == "learning_rate") o.learning_rate = r.real();
  else if (key == "weight_decay") o.weight_decay = r.real();
  else if (key == "momentum") o.momentum = r.real();
  else if (key == "batch_size") o.batch_size = static_cast<int>(r.integer());
  else if (key == "max_epochs") o.max_epochs = static_cast<int>(r.integer());
  else if (key == "early_stop_patience") o.early_stop_patience = static_cast<int>(r.integer());
  else if (key == "seed") o.seed = static_cast<std::uint64_t>(r.integer());
  else if (key == "balance") {
    if (r.text() == "none") o.balance = Sampling::none;
    else if (r.text() == "class-balanced") o.balance = Sampling::class_balanced;
    else if (r.text() == "group-balanced") o.balance = Sampling::group_balanced;
    else r.fail("expected none, class-balanced or group-balanced");
  } else r.fail("unknown key");
}

inline void apply_toy(const EntryReader& r, const std::string& key, ToyConfig& t) {
  if (key == "n") t.n = r.integer();
  else if (key == "d") t.d = r.integer();
  else if (key == "rho") t.rho = r.real();
  else if (key == "gamma_sp") t.gamma_sp = r.real();
  else if (key == "gamma_mt") t.gamma_mt = r.real();
  else if (key == "b_sp") t.b_sp = r.real();
  else if (key == "b_mt") t.b_mt = r.real();
  else if (key == "angle_deg") t.angle_deg = r.real();
  else if (key == "split_fraction") t.split_fraction = r.real();
  else if (key == "n_test") t.n_test = r.integer();
  else if (key == "seed") t.seed = static_cast<std::uint64_t>(r.integer());
  else r.fail("unknown key");
}

inline void apply_jse(const EntryReader& r, const std::string& key, JseConfig& c) {
  if (key == "alpha") c.alpha = r.real();
  else if (key == "delta") c.delta = r.text() == "auto" ? std::nullopt : std::optional<double>(r.real());
  else if (key == "max_dim") c.max_dim = r.integer();
  else if (key == "loop_order") {
    if (r.text() == "mt-inner") c.loop_order = LoopOrder::mt_inner;
    else if (r.text() == "sp-inner") c.loop_order = LoopOrder::sp_inner;
    else r.fail("expected mt-inner or sp-inner");
  } else if (key == "transform_mode") {
    if (r.text() == "remove-sp") c.transform_mode = TransformMode::remove_sp;
    else if (r.text() == "keep-mt") c.transform_mode = TransformMode::keep_mt;
    else r.fail("expected remove-sp or keep-mt");
  } else if (key == "group_weighted_tests") c.group_weighted_tests = r.boolean();
  else if (key == "estimate_mt_basis") c.estimate_mt_basis = r.boolean();
  else if (key == "one_dim_solver") {
    if (r.text() == "sgd") c.one_dim_solver = OneDimSolver::sgd;
    else if (r.text() == "newton") c.one_dim_solver = OneDimSolver::newton;
    else r.fail("expected sgd or newton");
  } else r.fail("unknown key");
}

inline void apply_inlp(const EntryReader& r, const std::string& key, InlpConfig& c) {
  if (key == "alpha") c.alpha = r.real();
  else if (key == "max_rounds") c.max_rounds = r.integer();
  else if (key == "group_weighted") c.group_weighted = r.boolean();
  else r.fail("unknown key");
}

inline void apply_rlace(const EntryReader& r, const std::string& key, RlaceConfig& c) {
  if (key == "rank") c.rank = r.integer();
  else if (key == "max_iters") c.max_iters = static_cast<int>(r.integer());
  else if (key == "stop_accuracy") c.stop_accuracy = r.real();
  else if (key == "evaluate_every") c.evaluate_every = static_cast<int>(r.integer());
  else r.fail("unknown key");
}

inline void apply_sweep(const EntryReader& r, const std::string& key, SweepConfig& s) {
  if (key == "axis") {
    try {
      s.axis = parse_axis(r.text());
    } catch (const DataError& e) {
      r.fail(e.what());
    }
  } else if (key == "values") {
    s.values.clear();
    for (const auto& item : r.list()) {
      const auto v = parse_double(item);
      if (!v) r.fail("invalid grid value '" + item + "'");
      s.values.push_back(*v);
    }
  } else if (key == "methods") {
    s.method_list.clear();
    for (const auto& item : r.list()) {
      try {
        s.method_list.push_back(parse_method(item));
      } catch (const DataError& e) {
        r.fail(e.what());
      }
    }
  } else if (key == "seeds") s.seeds = static_cast<int>(r.integer());
  else if (key == "base_seed") s.base_seed = static_cast<std::uint64_t>(r.integer());
  else if (key == "workers") s.workers = static_cast<int>(r.integer());
  else if (key == "min_success") s.min_success = r.real();
  else r.fail("unknown key");
}

}  // namespace detail

/// Applies every section of `file` to `out`. Unknown sections or keys are errors.
inline void apply_config(const ConfigFile& file, SweepConfig& out) {
  for (const auto& [section, entries] : file.sections) {
    for (const auto& e : entries) {
      const detail::EntryReader r(file, section, e);
      if (section == "toy") detail::apply_toy(r, e.key, out.toy);
      else if (section == "jse") detail::apply_jse(r, e.key, out.methods.jse);
      else if (section == "jse.optimizer") detail::apply_optimizer(r, e.key, out.methods.jse.optimizer);
      else if (section == "inlp") detail::apply_inlp(r, e.key, out.methods.inlp);
      else if (section == "inlp.optimizer") detail::apply_optimizer(r, e.key, out.methods.inlp.optimizer);
      else if (section == "rlace") detail::apply_rlace(r, e.key, out.methods.rlace);
      else if (section == "rlace.optimizer") detail::apply_optimizer(r, e.key, out.methods.rlace.optimizer);
      else if (section == "downstream") detail::apply_optimizer(r, e.key, out.methods.downstream);
      else if (section == "sweep") detail::apply_sweep(r, e.key, out);
      else
        throw DataError(file.name + ":" + std::to_string(e.line) + ": unknown section [" + section + "]");
    }
  }
}

}  // namespace jse
