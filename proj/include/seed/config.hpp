#pragma once

// Experiment configuration: `key = value` lines grouped under [section]
// headers. Every field has a canonical "section.key" name; the config hash is
// FNV-1a over the sorted canonical rendering, so key order in the file never
// matters.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seed/model.hpp"
#include "seed/optim.hpp"
#include "seed/synth_data.hpp"

namespace seed {

struct ExperimentConfig {
  std::string id = "seed_le";
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  bool augment = true;
  std::vector<model::InferenceMode> modes{model::InferenceMode::siamese};
  data::DatasetConfig data;
  model::ArchConfig arch;
  AdamWOptions optim;
  std::size_t shift_px = 0;                       // misregistration applied to every split
  std::vector<std::size_t> shift_grid{0, 2, 4, 6, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3};      // suite cells

  // Exchange masks are keyed by the experiment seed unless set otherwise.
  ExperimentConfig() { arch.exchange.seed = seed; }

  void validate() const {
    if (epochs < 1) throw ConfigError("experiment.epochs must be >= 1");
    if (batch < 1) throw ConfigError("experiment.batch must be >= 1");
    if (modes.empty()) throw ConfigError("experiment.modes must not be empty");
    if (seeds.empty()) throw ConfigError("suite.seeds must not be empty");
    data.validate();
    arch.validate();
    optim.validate();
    if (arch.height != data.height || arch.width != data.width) {
      throw ConfigError("arch input size differs from data size");
    }
    if (shift_px >= data.width) throw ConfigError("shift.px must be below the image width");
    for (auto n : shift_grid)
      if (n >= data.width) throw ConfigError("shift.grid entry " + std::to_string(n) + " >= image width");
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
std::string join(const std::vector<T>& xs, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(" \t");
    const auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* first = v.data();
  const auto* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

// One accessor pair per canonical key.
struct Field {
  std::string (*get)(const ExperimentConfig&);
  void (*set)(ExperimentConfig&, const std::string& key, const std::string& value);
};

#define SEED_SIZE_FIELD(expr)                                                                  \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return std::to_string(c.expr); },                          \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.expr = parse_number<std::decay_t<decltype(c.expr)>>(k, v);                         \
        }                                                                                      \
  }
#define SEED_DOUBLE_FIELD(expr)                                                                \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return fmt_double(c.expr); },                              \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.expr = parse_number<double>(k, v);                                                 \
        }                                                                                      \
  }

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      {"experiment.id", {[](const ExperimentConfig& c) { return c.id; },
                         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.id = v; }}},
      {"experiment.seed", SEED_SIZE_FIELD(seed)},
      {"experiment.epochs", SEED_SIZE_FIELD(epochs)},
      {"experiment.batch", SEED_SIZE_FIELD(batch)},
      {"experiment.augment",
       {[](const ExperimentConfig& c) { return std::string(c.augment ? "true" : "false"); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.augment = parse_bool(k, v); }}},
      {"experiment.modes",
       {[](const ExperimentConfig& c) {
          return join(c.modes, [](model::InferenceMode m) { return model::to_string(m); });
        },
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.modes.clear();
          for (const auto& s : split_list(v)) c.modes.push_back(model::parse_mode(s));
        }}},
      {"data.n_train", SEED_SIZE_FIELD(data.n_train)},
      {"data.n_val", SEED_SIZE_FIELD(data.n_val)},
      {"data.n_test", SEED_SIZE_FIELD(data.n_test)},
      {"data.height", SEED_SIZE_FIELD(data.height)},
      {"data.width", SEED_SIZE_FIELD(data.width)},
      {"data.min_shapes", SEED_SIZE_FIELD(data.min_shapes)},
      {"data.max_shapes", SEED_SIZE_FIELD(data.max_shapes)},
      {"data.max_new_shapes", SEED_SIZE_FIELD(data.max_new_shapes)},
      {"data.change_prob", SEED_DOUBLE_FIELD(data.change_prob)},
      {"data.noise_level", SEED_DOUBLE_FIELD(data.noise_level)},
      {"data.seed", SEED_SIZE_FIELD(data.seed)},
      {"arch.in_channels", SEED_SIZE_FIELD(arch.in_channels)},
      {"arch.levels", SEED_SIZE_FIELD(arch.levels)},
      {"arch.channels",
       {[](const ExperimentConfig& c) { return join(c.arch.channels, [](std::size_t n) { return std::to_string(n); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.arch.channels.clear();
          for (const auto& s : split_list(v)) c.arch.channels.push_back(parse_number<std::size_t>(k, s));
        }}},
      {"arch.blocks", SEED_SIZE_FIELD(arch.blocks)},
      {"arch.decoder_blocks", SEED_SIZE_FIELD(arch.decoder_blocks)},
      {"arch.neck_channels", SEED_SIZE_FIELD(arch.neck_channels)},
      {"arch.bottleneck_ratio", SEED_SIZE_FIELD(arch.bottleneck_ratio)},
      {"arch.head", {[](const ExperimentConfig& c) { return model::to_string(c.arch.head); },
                     [](ExperimentConfig& c, const std::string&, const std::string& v) {
                       c.arch.head = model::parse_head(v);
                     }}},
      {"exchange.axis", {[](const ExperimentConfig& c) { return to_string(c.arch.exchange.axis); },
                         [](ExperimentConfig& c, const std::string&, const std::string& v) {
                           c.arch.exchange.axis = parse_axis(v);
                         }}},
      {"exchange.policy", {[](const ExperimentConfig& c) { return to_string(c.arch.exchange.policy); },
                           [](ExperimentConfig& c, const std::string&, const std::string& v) {
                             c.arch.exchange.policy = parse_policy(v);
                           }}},
      {"exchange.step", SEED_SIZE_FIELD(arch.exchange.step)},
      {"exchange.offset", SEED_SIZE_FIELD(arch.exchange.offset)},
      {"exchange.p", SEED_DOUBLE_FIELD(arch.exchange.p)},
      {"exchange.seed", SEED_SIZE_FIELD(arch.exchange.seed)},
      {"optim.lr", SEED_DOUBLE_FIELD(optim.lr)},
      {"optim.beta1", SEED_DOUBLE_FIELD(optim.beta1)},
      {"optim.beta2", SEED_DOUBLE_FIELD(optim.beta2)},
      {"optim.eps", SEED_DOUBLE_FIELD(optim.eps)},
      {"optim.weight_decay", SEED_DOUBLE_FIELD(optim.weight_decay)},
      {"shift.px", SEED_SIZE_FIELD(shift_px)},
      {"shift.grid",
       {[](const ExperimentConfig& c) { return join(c.shift_grid, [](std::size_t n) { return std::to_string(n); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.shift_grid.clear();
          for (const auto& s : split_list(v)) c.shift_grid.push_back(parse_number<std::size_t>(k, s));
        }}},
      {"suite.seeds",
       {[](const ExperimentConfig& c) { return join(c.seeds, [](std::uint64_t n) { return std::to_string(n); }); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, s));
        }}},
  };
  return table;
}

#undef SEED_SIZE_FIELD
#undef SEED_DOUBLE_FIELD

}  // namespace detail

// Sorted "section.key" -> canonical value.
inline std::map<std::string, std::string> canonical(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, f] : detail::fields()) out[key] = f.get(cfg);
  return out;
}

inline void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = detail::fields();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, key, value);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// The experiment id is a label only and stays out of the hash.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::string text;
  for (const auto& [k, v] : canonical(cfg))
    if (k != "experiment.id") text += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

inline std::string to_ini(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : canonical(cfg)) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

// Overlays the keys present in `text` onto `base`. Keys outside a section are
// rejected, as are unknown keys.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {},
                                     const std::string& origin = "<config>") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(origin + ": key '" + section + "' is not inside a [section]");
    for (const auto& [key, node] : body) set_key(base, section + "." + key, node.get_value<std::string>());
  }
  // The model input size always follows the data.
  base.arch.height = base.data.height;
  base.arch.width = base.data.width;
  base.validate();
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base), path.string());
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write config file " + path.string());
  f << to_ini(cfg);
}

}  // namespace seed
