#include "foc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace foc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& key, const std::string& v, Parse parse) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(parse(key, trim(item))));
  return out;
}

// Key registry: each entry knows how to apply and print itself.
struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::vector<Key> scalar_keys() {
  std::vector<Key> keys;
  auto add = [&](std::string name, auto set, auto get) { keys.push_back({std::move(name), set, get}); };
  add("seed", [](RunConfig& c, const std::string& v) { c.seed = to_uint("seed", v); },
      [](const RunConfig& c) { return std::to_string(c.seed); });

  add("model.hidden_dims",
      [](RunConfig& c, const std::string& v) { c.model.hidden_dims = to_list<std::size_t>("model.hidden_dims", v, to_uint); },
      [](const RunConfig& c) { return join(c.model.hidden_dims); });
  add("model.k_over", [](RunConfig& c, const std::string& v) { c.model.k_over = to_uint("model.k_over", v); },
      [](const RunConfig& c) { return std::to_string(c.model.k_over); });
  add("model.head_copies", [](RunConfig& c, const std::string& v) { c.model.head_copies = to_uint("model.head_copies", v); },
      [](const RunConfig& c) { return std::to_string(c.model.head_copies); });

  add("train.stage",
      [](RunConfig& c, const std::string& v) {
        try {
          c.train.stage = parse_stage(v);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("key 'train.stage': ") + e.what());
        }
      },
      [](const RunConfig& c) { return std::string(to_string(c.train.stage)); });
  add("train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_uint("train.epochs", v); },
      [](const RunConfig& c) { return std::to_string(c.train.epochs); });
  add("train.warmup_epochs", [](RunConfig& c, const std::string& v) { c.train.warmup_epochs = to_uint("train.warmup_epochs", v); },
      [](const RunConfig& c) { return std::to_string(c.train.warmup_epochs); });
  add("train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = to_double("train.lr", v); },
      [](const RunConfig& c) { return fmt(c.train.lr); });
  add("train.head_only_epochs",
      [](RunConfig& c, const std::string& v) { c.train.head_only_epochs = to_uint("train.head_only_epochs", v); },
      [](const RunConfig& c) { return std::to_string(c.train.head_only_epochs); });
  add("train.head_only_lr", [](RunConfig& c, const std::string& v) { c.train.head_only_lr = to_double("train.head_only_lr", v); },
      [](const RunConfig& c) { return fmt(c.train.head_only_lr); });
  add("train.lambda_s", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_s = to_double("train.lambda_s", v); },
      [](const RunConfig& c) { return fmt(c.train.weights.lambda_s); });
  add("train.lambda_u", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_u = to_double("train.lambda_u", v); },
      [](const RunConfig& c) { return fmt(c.train.weights.lambda_u); });
  add("train.supervised_aug", [](RunConfig& c, const std::string& v) { c.train.supervised_aug = to_bool("train.supervised_aug", v); },
      [](const RunConfig& c) { return std::string(c.train.supervised_aug ? "true" : "false"); });

  add("sampler.batch_size", [](RunConfig& c, const std::string& v) { c.train.sampler.batch_size = to_uint("sampler.batch_size", v); },
      [](const RunConfig& c) { return std::to_string(c.train.sampler.batch_size); });
  add("sampler.ratio", [](RunConfig& c, const std::string& v) { c.train.sampler.ratio = to_double("sampler.ratio", v); },
      [](const RunConfig& c) { return fmt(c.train.sampler.ratio); });
  add("sampler.repeats", [](RunConfig& c, const std::string& v) { c.train.sampler.repeats = to_uint("sampler.repeats", v); },
      [](const RunConfig& c) { return std::to_string(c.train.sampler.repeats); });

  add("augment.noise_sigma",
      [](RunConfig& c, const std::string& v) { c.train.augmentation.noise_sigma = to_double("augment.noise_sigma", v); },
      [](const RunConfig& c) { return fmt(c.train.augmentation.noise_sigma); });
  add("augment.scale_jitter",
      [](RunConfig& c, const std::string& v) { c.train.augmentation.scale_jitter = to_double("augment.scale_jitter", v); },
      [](const RunConfig& c) { return fmt(c.train.augmentation.scale_jitter); });

  add("eval.fit_split",
      [](RunConfig& c, const std::string& v) {
        try {
          c.train.fit_split = parse_fit_split(v);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("key 'eval.fit_split': ") + e.what());
        }
      },
      [](const RunConfig& c) { return std::string(to_string(c.train.fit_split)); });
  add("eval.exclude_components",
      [](RunConfig& c, const std::string& v) {
        c.exclude_components = to_list<int>("eval.exclude_components", v, to_uint);
      },
      [](const RunConfig& c) { return join(c.exclude_components); });

  add("gen.labeled_fraction",
      [](RunConfig& c, const std::string& v) { c.generator.labeled_fraction = to_double("gen.labeled_fraction", v); },
      [](const RunConfig& c) { return fmt(c.generator.labeled_fraction); });
  add("gen.validation_fraction",
      [](RunConfig& c, const std::string& v) { c.generator.validation_fraction = to_double("gen.validation_fraction", v); },
      [](const RunConfig& c) { return fmt(c.generator.validation_fraction); });
  return keys;
}

// gen.component.<i>.<field>
bool apply_component_key(RunConfig& c, const std::string& key, const std::string& value) {
  static const std::string prefix = "gen.component.";
  if (key.rfind(prefix, 0) != 0) return false;
  const std::string rest = key.substr(prefix.size());
  const auto dot = rest.find('.');
  if (dot == std::string::npos) return false;
  const std::uint64_t idx = to_uint(key, rest.substr(0, dot));
  const std::string field = rest.substr(dot + 1);
  if (idx >= c.generator.components.size()) {
    throw ConfigError("key '" + key + "': component index exceeds gen.components");
  }
  auto& comp = c.generator.components[idx];
  if (field == "mean") {
    comp.mean = to_list<double>(key, value, to_double);
  } else if (field == "scale") {
    comp.scale = to_double(key, value);
  } else if (field == "count") {
    comp.count = to_uint(key, value);
  } else if (field == "annotation") {
    comp.annotation = to_list<double>(key, value, to_double);
  } else {
    return false;
  }
  return true;
}

}  // namespace

void RunConfig::validate() const {
  try {
    train.validate();
    generator.validate();
    if (model.k_over < 3) throw ConfigError("model.k_over must be >= 3");
    if (model.head_copies == 0) throw ConfigError("model.head_copies must be >= 1");
    for (auto h : model.hidden_dims) {
      if (h == 0) throw ConfigError("model.hidden_dims entries must be > 0");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& k : scalar_keys()) out << k.name << " = " << k.get(*this) << '\n';
  out << "gen.components = " << generator.components.size() << '\n';
  for (std::size_t i = 0; i < generator.components.size(); ++i) {
    const auto& comp = generator.components[i];
    const std::string p = "gen.component." + std::to_string(i) + ".";
    out << p << "mean = " << join(comp.mean) << '\n';
    out << p << "scale = " << fmt(comp.scale) << '\n';
    out << p << "count = " << comp.count << '\n';
    out << p << "annotation = " << join(comp.annotation) << '\n';
  }
  return out.str();
}

RunConfig parse_run_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::set<std::string> seen;
  std::map<std::string, std::size_t> line_of;
  std::string section, line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    line_of[key] = line_no;
    entries.emplace_back(key, trim(line.substr(eq + 1)));
  }

  RunConfig cfg;
  const auto keys = scalar_keys();
  // Component count first so component keys can be range-checked.
  for (const auto& [key, value] : entries) {
    if (key != "gen.components") continue;
    const auto n = to_uint(key, value);
    const auto defaults = GeneratorConfig::fuzzy_three_blobs().components;
    cfg.generator.components.resize(n);
    for (std::size_t i = 0; i < n && i < defaults.size(); ++i) cfg.generator.components[i] = defaults[i];
  }
  for (const auto& [key, value] : entries) {
    if (key == "gen.components") continue;
    try {
      const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
      if (it != keys.end()) {
        it->set(cfg, value);
      } else if (!apply_component_key(cfg, key, value)) {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_of[key]) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return parse_run_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string default_config_text() { return RunConfig{}.dump(); }

}  // namespace foc
