#include "gsfda/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "gsfda/csv.hpp"
#include "gsfda/errors.hpp"
#include "gsfda/rng.hpp"

namespace gsfda {

namespace {

// seed stream tags for data generation and splitting
constexpr std::uint64_t kGenStream = 400;    // + domain index
constexpr std::uint64_t kSplitStream = 500;  // + domain index

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct RawEntry {
  std::string value;
  long line;
  bool used = false;
};

// section -> key -> (value, line); duplicate keys are errors
using RawConfig = std::map<std::string, std::map<std::string, RawEntry>>;

RawConfig read_raw(std::istream& in, const std::string& origin) {
  RawConfig raw;
  std::string section;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError(origin + ": unterminated section header", lineno);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ": expected key = value", lineno);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(origin + ": empty key", lineno);
    if (section.empty())
      throw ParseError(origin + ": key before any [section]", lineno);
    auto [it, inserted] = raw[section].emplace(key, RawEntry{value, lineno});
    if (!inserted)
      throw ParseError(origin + ": duplicate key '" + key + "'", lineno);
  }
  return raw;
}

// Typed accessors over one section; every fetched key is marked used so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(RawConfig& raw, std::string name, const std::string& origin)
      : entries_(raw.count(name) ? &raw[name] : nullptr),
        name_(std::move(name)),
        origin_(origin) {}

  bool has(const std::string& key) const {
    return entries_ && entries_->count(key);
  }

  template <typename F>
  void fetch(const std::string& key, F&& parse) {
    if (!has(key)) return;
    RawEntry& e = (*entries_)[key];
    e.used = true;
    try {
      parse(e.value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(origin_ + ": bad value for '" + key + "'", e.line);
    }
  }

 private:
  std::map<std::string, RawEntry>* entries_;
  std::string name_;
  const std::string& origin_;
};

long parse_long(const std::string& s) {
  std::size_t pos = 0;
  long v = std::stol(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing junk");
  return v;
}

double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing junk");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

FullConfig parse_config(std::istream& in, const std::string& origin) {
  RawConfig raw = read_raw(in, origin);
  for (const auto& [section, _] : raw)
    if (section != "run" && section != "network" && section != "data")
      throw ConfigError(origin + ": unknown section [" + section + "]");

  FullConfig cfg;
  Section run(raw, "run", origin);
  run.fetch("seed", [&](const std::string& v) {
    cfg.run.seed = static_cast<std::uint64_t>(parse_long(v));
  });
  run.fetch("epochs_source", [&](const std::string& v) {
    cfg.run.epochs_source = static_cast<int>(parse_long(v));
  });
  run.fetch("epochs_target", [&](const std::string& v) {
    cfg.run.epochs_target = static_cast<int>(parse_long(v));
  });
  run.fetch("epochs_dc", [&](const std::string& v) {
    cfg.run.epochs_dc = static_cast<int>(parse_long(v));
  });
  run.fetch("batch_size", [&](const std::string& v) {
    cfg.run.batch_size = static_cast<std::size_t>(parse_long(v));
  });
  run.fetch("lr_source",
            [&](const std::string& v) { cfg.run.lr_source = parse_double(v); });
  run.fetch("lr_target",
            [&](const std::string& v) { cfg.run.lr_target = parse_double(v); });
  run.fetch("lr_dc",
            [&](const std::string& v) { cfg.run.lr_dc = parse_double(v); });
  run.fetch("momentum",
            [&](const std::string& v) { cfg.run.momentum = parse_double(v); });
  run.fetch("k", [&](const std::string& v) {
    cfg.run.k = static_cast<int>(parse_long(v));
  });
  run.fetch("balance_weight", [&](const std::string& v) {
    cfg.run.balance_weight = parse_double(v);
  });
  run.fetch("lambda_sparsity", [&](const std::string& v) {
    cfg.run.lambda_sparsity = parse_double(v);
  });
  run.fetch("exemplars_per_domain", [&](const std::string& v) {
    cfg.run.exemplars_per_domain = static_cast<std::size_t>(parse_long(v));
  });

  Section net(raw, "network", origin);
  net.fetch("input_dim", [&](const std::string& v) {
    cfg.run.dims.input_dim = static_cast<std::size_t>(parse_long(v));
  });
  net.fetch("hidden", [&](const std::string& v) {
    cfg.run.dims.hidden = static_cast<std::size_t>(parse_long(v));
  });
  net.fetch("feature", [&](const std::string& v) {
    cfg.run.dims.feature = static_cast<std::size_t>(parse_long(v));
  });
  net.fetch("classes", [&](const std::string& v) {
    cfg.run.dims.classes = static_cast<std::size_t>(parse_long(v));
  });

  Section data(raw, "data", origin);
  data.fetch("generator",
             [&](const std::string& v) { cfg.data.generator = v; });
  data.fetch("n_per_domain", [&](const std::string& v) {
    cfg.data.n_per_domain = static_cast<std::size_t>(parse_long(v));
  });
  data.fetch("noise_sd",
             [&](const std::string& v) { cfg.data.noise_sd = parse_double(v); });
  data.fetch("source_rotation_deg", [&](const std::string& v) {
    cfg.data.source_rotation_deg = parse_double(v);
  });
  data.fetch("target_rotation_degs", [&](const std::string& v) {
    cfg.data.target_rotation_degs.clear();
    for (const std::string& item : split_list(v))
      cfg.data.target_rotation_degs.push_back(parse_double(item));
  });
  data.fetch("train_fraction", [&](const std::string& v) {
    cfg.data.train_fraction = parse_double(v);
  });
  data.fetch("stratified", [&](const std::string& v) {
    cfg.data.stratified = parse_bool(v);
  });
  data.fetch("standardize", [&](const std::string& v) {
    cfg.data.standardize = parse_bool(v);
  });
  data.fetch("source_csv",
             [&](const std::string& v) { cfg.data.source_csv = v; });
  data.fetch("target_csvs", [&](const std::string& v) {
    cfg.data.target_csvs = split_list(v);
  });

  for (const auto& [section, entries] : raw)
    for (const auto& [key, entry] : entries)
      if (!entry.used)
        throw ParseError(origin + ": unknown key '" + key + "' in [" +
                             section + "]",
                         entry.line);

  // derived and cross-field checks
  if (cfg.data.generator == "two_moons") {
    if (cfg.run.dims.input_dim != 2 || cfg.run.dims.classes != 2)
      throw ConfigError(origin +
                        ": two_moons requires input_dim = 2, classes = 2");
    if (cfg.data.target_rotation_degs.empty())
      throw ConfigError(origin + ": need at least one target rotation");
    cfg.run.n_targets = cfg.data.target_rotation_degs.size();
  } else if (cfg.data.generator == "csv") {
    if (cfg.data.source_csv.empty() || cfg.data.target_csvs.empty())
      throw ConfigError(origin + ": csv generator needs source_csv and target_csvs");
    cfg.run.n_targets = cfg.data.target_csvs.size();
  } else {
    throw ConfigError(origin + ": unknown generator '" + cfg.data.generator +
                      "' (two_moons | csv)");
  }
  if (cfg.data.train_fraction <= 0.0 || cfg.data.train_fraction >= 1.0)
    throw ConfigError(origin + ": train_fraction must be in (0, 1)");
  cfg.run.validate();
  return cfg;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  return parse_config(in, path);
}

std::vector<Dataset> DataBundle::train_sets() const {
  std::vector<Dataset> out{source_train};
  out.insert(out.end(), target_trains.begin(), target_trains.end());
  return out;
}

std::vector<Dataset> DataBundle::test_sets() const {
  std::vector<Dataset> out{source_test};
  out.insert(out.end(), target_tests.begin(), target_tests.end());
  return out;
}

std::vector<Dataset> build_domains(const FullConfig& cfg) {
  std::vector<Dataset> domains;
  if (cfg.data.generator == "two_moons") {
    domains.push_back(gen_two_moons(cfg.data.n_per_domain, cfg.data.noise_sd,
                                    cfg.data.source_rotation_deg,
                                    Rng::mix(cfg.run.seed, kGenStream)));
    for (std::size_t i = 0; i < cfg.data.target_rotation_degs.size(); ++i)
      domains.push_back(gen_two_moons(
          cfg.data.n_per_domain, cfg.data.noise_sd,
          cfg.data.target_rotation_degs[i],
          Rng::mix(cfg.run.seed, kGenStream + 1 + i)));
  } else {
    domains.push_back(load_csv(cfg.data.source_csv, true));
    for (const std::string& path : cfg.data.target_csvs)
      domains.push_back(load_csv(path, true));
    for (const Dataset& d : domains)
      if (d.dim() != cfg.run.dims.input_dim)
        throw ConfigError("csv feature dim " + std::to_string(d.dim()) +
                          " does not match input_dim");
  }
  for (std::size_t i = 0; i < domains.size(); ++i) {
    domains[i].domain_id = static_cast<int>(i);
    domains[i].name = i == 0 ? "source" : "target" + std::to_string(i);
  }
  return domains;
}

DataBundle build_data(const FullConfig& cfg) {
  std::vector<Dataset> domains = build_domains(cfg);
  DataBundle bundle;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    SplitSpec spec;
    spec.train_fraction = cfg.data.train_fraction;
    spec.stratified = cfg.data.stratified;
    spec.seed = Rng::mix(cfg.run.seed, kSplitStream + i);
    auto [train, test] = split(domains[i], spec);
    if (i == 0) {
      bundle.source_train = std::move(train);
      bundle.source_test = std::move(test);
    } else {
      bundle.target_trains.push_back(std::move(train));
      bundle.target_tests.push_back(std::move(test));
    }
  }

  if (cfg.data.standardize) {
    FeatureStats stats = feature_stats(bundle.source_train);
    bundle.source_train = standardize(bundle.source_train, stats);
    bundle.source_test = standardize(bundle.source_test, stats);
    for (auto& d : bundle.target_trains) d = standardize(d, stats);
    for (auto& d : bundle.target_tests) d = standardize(d, stats);
  }
  return bundle;
}

}  // namespace gsfda
