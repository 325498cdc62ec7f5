// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace afiu {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not an integer");
  return out;
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int64_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<int64_t> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

template <typename Container>
std::string join(const Container& c) {
  std::string s;
  for (const auto& v : c) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Insertion order is the canonical order of to_text().
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto add = [&t](const std::string& key, Field f) { t.emplace_back(key, std::move(f)); };
    auto text = [&add](const std::string& key, std::string RunConfig::*m) {
      add(key, {[m](const RunConfig& c) { return c.*m; }, [m](RunConfig& c, const std::string& v) { c.*m = v; }});
    };
    auto integer = [&add](const std::string& key, auto getter) {
      add(key, {[getter](const RunConfig& c) { return std::to_string(getter(const_cast<RunConfig&>(c))); },
                [getter, key](RunConfig& c, const std::string& v) {
                  getter(c) = static_cast<std::remove_reference_t<decltype(getter(c))>>(parse_int(key, v));
                }});
    };
    auto real = [&add](const std::string& key, auto getter) {
      add(key, {[getter](const RunConfig& c) { return format_double(getter(const_cast<RunConfig&>(c))); },
                [getter, key](RunConfig& c, const std::string& v) { getter(c) = parse_double(key, v); }});
    };

    add("model.profile", {[](const RunConfig& c) { return c.profile; },
                          [](RunConfig& c, const std::string& v) {
                            if (v == "standard") c.model = AfiuConfig::standard();
                            else if (v == "tiny") c.model = AfiuConfig::tiny();
                            else throw ConfigError("model.profile: expected standard or tiny, got '" + v + "'");
                            c.profile = v;
                            c.dilated_auto = true;
                          }});
    integer("model.input_height", [](RunConfig& c) -> int64_t& { return c.model.input_height; });
    integer("model.input_width", [](RunConfig& c) -> int64_t& { return c.model.input_width; });
    integer("model.interaction_width", [](RunConfig& c) -> int64_t& { return c.model.interaction_width; });
    integer("model.backbone_width", [](RunConfig& c) -> int64_t& { return c.model.backbone_width; });
    add("model.backbone_blocks", {[](const RunConfig& c) { return join(c.model.backbone_blocks); },
                                  [](RunConfig& c, const std::string& v) {
                                    const auto l = parse_list("model.backbone_blocks", v);
                                    if (l.size() != 4) throw ConfigError("model.backbone_blocks: expected 4 values");
                                    for (size_t i = 0; i < 4; ++i) c.model.backbone_blocks[i] = static_cast<int>(l[i]);
                                  }});
    add("model.rsu_depths", {[](const RunConfig& c) { return join(c.model.rsu_depths); },
                             [](RunConfig& c, const std::string& v) {
                               const auto l = parse_list("model.rsu_depths", v);
                               if (l.size() != 5) throw ConfigError("model.rsu_depths: expected 5 values");
                               for (size_t i = 0; i < 5; ++i) c.model.rsu_depths[i] = static_cast<int>(l[i]);
                             }});
    add("model.dilated_levels", {[](const RunConfig& c) { return c.dilated_auto ? "auto" : join(c.model.dilated_levels); },
                                 [](RunConfig& c, const std::string& v) {
                                   if (v == "auto") {
                                     c.dilated_auto = true;
                                     return;
                                   }
                                   c.dilated_auto = false;
                                   c.model.dilated_levels.clear();
                                   for (int64_t l : parse_list("model.dilated_levels", v))
                                     c.model.dilated_levels.insert(static_cast<int>(l));
                                 }});
    add("model.backbone_init",
        {[](const RunConfig& c) {
           return std::string(c.model.backbone_init == BackboneInit::random ? "random" : "pretrained");
         },
         [](RunConfig& c, const std::string& v) {
           if (v == "random") c.model.backbone_init = BackboneInit::random;
           else if (v == "pretrained") c.model.backbone_init = BackboneInit::pretrained;
           else throw ConfigError("model.backbone_init: expected random or pretrained, got '" + v + "'");
         }});
    add("model.backbone_weights", {[](const RunConfig& c) { return c.model.backbone_weights; },
                                   [](RunConfig& c, const std::string& v) { c.model.backbone_weights = v; }});
    add("model.init_seed", {[](const RunConfig& c) { return std::to_string(c.model.init_seed); },
                            [](RunConfig& c, const std::string& v) { c.model.init_seed = parse_uint("model.init_seed", v); }});
    add("model.zero_init_residual",
        {[](const RunConfig& c) { return std::string(c.model.zero_init_residual ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.model.zero_init_residual = parse_bool("model.zero_init_residual", v); }});

    real("optim.learning_rate", [](RunConfig& c) -> double& { return c.optim.learning_rate; });
    real("optim.beta1", [](RunConfig& c) -> double& { return c.optim.beta1; });
    real("optim.beta2", [](RunConfig& c) -> double& { return c.optim.beta2; });
    real("optim.epsilon", [](RunConfig& c) -> double& { return c.optim.epsilon; });
    real("optim.weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; });
    integer("optim.batch_size", [](RunConfig& c) -> int64_t& { return c.optim.batch_size; });
    add("optim.seed", {[](const RunConfig& c) { return std::to_string(c.optim.seed); },
                       [](RunConfig& c, const std::string& v) { c.optim.seed = parse_uint("optim.seed", v); }});

    add("augment.flip_axis", {[](const RunConfig& c) { return data::to_string(c.augment.flip_axis); },
                              [](RunConfig& c, const std::string& v) {
                                try {
                                  c.augment.flip_axis = data::parse_flip_axis(v);
                                } catch (const std::exception& e) {
                                  throw ConfigError(std::string("augment.flip_axis: ") + e.what());
                                }
                              }});
    real("augment.flip_probability", [](RunConfig& c) -> double& { return c.augment.flip_probability; });
    real("augment.brightness", [](RunConfig& c) -> double& { return c.augment.brightness; });
    real("augment.contrast", [](RunConfig& c) -> double& { return c.augment.contrast; });
    real("augment.saturation", [](RunConfig& c) -> double& { return c.augment.saturation; });

    text("data.corpus", &RunConfig::corpus);
    text("data.sod_corpus", &RunConfig::sod_corpus);
    text("data.dbd_corpus", &RunConfig::dbd_corpus);
    text("data.image_dir", &RunConfig::image_dir);
    text("data.mask_dir", &RunConfig::mask_dir);

    text("train.init", &RunConfig::init);
    integer("train.pretrain_epochs", [](RunConfig& c) -> int64_t& { return c.pretrain_epochs; });
    integer("train.finetune_epochs", [](RunConfig& c) -> int64_t& { return c.finetune_epochs; });
    integer("train.scratch_epochs", [](RunConfig& c) -> int64_t& { return c.scratch_epochs; });

    integer("synth.count", [](RunConfig& c) -> int64_t& { return c.synth_count; });
    add("synth.seed", {[](const RunConfig& c) { return std::to_string(c.synth_seed); },
                       [](RunConfig& c, const std::string& v) { c.synth_seed = parse_uint("synth.seed", v); }});
    integer("synth.size", [](RunConfig& c) -> int64_t& { return c.synth_size; });
    add("synth.style", {[](const RunConfig& c) { return data::to_string(c.synth_style); },
                        [](RunConfig& c, const std::string& v) {
                          try {
                            c.synth_style = data::parse_synth_style(v);
                          } catch (const std::exception& e) {
                            throw ConfigError(std::string("synth.style: ") + e.what());
                          }
                        }});

    text("run.out", &RunConfig::out);
    integer("run.threads", [](RunConfig& c) -> int& { return c.threads; });
    return t;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

AfiuConfig RunConfig::resolved_model() const {
  AfiuConfig m = model;
  if (dilated_auto) m.dilated_levels = default_dilated_levels(m.input_height, m.input_width, m.rsu_depths);
  return m;
}

data::AugmentConfig RunConfig::resolved_augment() const {
  data::AugmentConfig a = augment;
  a.target_height = model.input_height;
  a.target_width = model.input_width;
  return a;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, f] : fields()) out.push_back(key);
    return out;
  }();
  return k;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [key, f] : fields()) s += key + " = " + f.get(*this) + "\n";
  return s;
}

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string RunConfig::digest() const {
  std::string s;
  for (const auto& [key, f] : fields()) {
    if (key.rfind("run.", 0) != 0) s += key + " = " + f.get(*this) + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

void RunConfig::validate() const {
  try {
    resolved_model().validate();
    optim.validate();
    resolved_augment().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (int64_t e : {pretrain_epochs, finetune_epochs, scratch_epochs}) {
    if (e < 1) throw ConfigError("epoch budgets must be >= 1");
  }
  if (threads < 0) throw ConfigError("run.threads must be >= 0");
}

std::map<std::string, std::string> RunConfig::model_entries() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, f] : fields()) {
    if (key.rfind("model.", 0) == 0) out[key] = f.get(*this);
  }
  return out;
}

RunConfig RunConfig::from_model_entries(const std::map<std::string, std::string>& entries) {
  RunConfig c;
  if (auto it = entries.find("model.profile"); it != entries.end()) c.set(it->first, it->second);
  for (const auto& [key, value] : entries) {
    if (key.rfind("model.", 0) == 0 && key != "model.profile") c.set(key, value);
  }
  return c;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  std::string key = trim(text.substr(0, eq));
  if (key.empty()) throw ConfigError("missing key in '" + text + "'");
  return {key, trim(text.substr(eq + 1))};
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  struct Entry {
    std::string key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  for (int lineno = 1; std::getline(in, raw); ++lineno) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    std::pair<std::string, std::string> kv;
    try {
      kv = split_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (auto it = seen.find(kv.first); it != seen.end()) {
      throw ConfigError(where + "'" + kv.first + "' already set on line " + std::to_string(it->second));
    }
    seen[kv.first] = lineno;
    entries.push_back({kv.first, kv.second, lineno});
  }
  RunConfig c;
  // The profile resets every model field, so it goes first.
  std::stable_partition(entries.begin(), entries.end(), [](const Entry& e) { return e.key == "model.profile"; });
  for (const auto& e : entries) {
    try {
      c.set(e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(source + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "# afiu effective config, digest " << digest() << "\n" << to_text();
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv("AFIU_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

}  // namespace afiu
