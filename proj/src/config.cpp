#include "vlwb/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "vlwb/imageio.hpp"
#include "vlwb/rng.hpp"
#include "vlwb/vocab.hpp"

namespace vlwb::config {

std::string to_string(Task task) {
  switch (task) {
    case Task::kClassification: return "classification";
    case Task::kRetrieval: return "retrieval";
    case Task::kVqaSynthetic: return "vqa-synthetic";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::kClassification;
  if (text == "retrieval") return Task::kRetrieval;
  if (text == "vqa-synthetic") return Task::kVqaSynthetic;
  throw ConfigError("task: unknown value \"" + std::string(text) +
                    "\" (expected classification, retrieval or vqa-synthetic)");
}

void RunConfig::resolve() {
  data.seed = derive_seed(seed, "data");
  train.seed = derive_seed(seed, "train");
  model.height = data.height;
  model.width = data.width;
  model.channels = data.channels;
}

std::uint64_t RunConfig::attack_seed() const { return derive_seed(seed, "attack"); }
std::uint64_t RunConfig::qd_seed() const { return derive_seed(seed, "qd"); }

attacks::AttackConfig RunConfig::attack_config(attacks::Method m, attacks::Setting s) const {
  auto cfg = attacks::preset(m, s);
  cfg.seed = attack_seed();
  if (m != method || s != setting) return cfg;
  if (overrides.steps) cfg.steps = *overrides.steps;
  if (overrides.step_size) cfg.step_size = *overrides.step_size;
  if (overrides.epsilon) cfg.epsilon = *overrides.epsilon;
  if (overrides.c) cfg.c = *overrides.c;
  if (overrides.kappa) cfg.kappa = *overrides.kappa;
  return cfg;
}

attacks::AttackConfig RunConfig::attack_config() const { return attack_config(method, setting); }

void RunConfig::validate() const {
  const auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  if (parallelism == 0) throw ConfigError("parallelism: must be at least 1");
  if (seed > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    throw ConfigError("seed: must fit in a signed 64-bit integer");
  }
  wrap("data", [&] { data.validate(); });
  wrap("model", [&] { model.validate(); });
  if (model.height != data.height || model.width != data.width ||
      model.channels != data.channels) {
    throw ConfigError("model: image shape differs from data");
  }
  if (train.epochs == 0) throw ConfigError("train.epochs: must be positive");
  if (train.batch < 2) throw ConfigError("train.batch: must be at least 2");
  if (!(train.lr > 0.0) || !std::isfinite(train.lr)) throw ConfigError("train.lr: must be positive");
  if (eval.k < 2 || eval.k > data.classes.size()) {
    throw ConfigError("eval.k: must lie in [2, " + std::to_string(data.classes.size()) + "]");
  }
  if (!std::isfinite(eval.context_weight) || eval.context_weight < 0.0) {
    throw ConfigError("eval.context_weight: must be finite and non-negative");
  }
  wrap("attack", [&] { attack_config().validate(); });
  data::PromptTemplate templ("{}");
  wrap("prompts.classification", [&] { templ = data::PromptTemplate(classification_template); });
  const auto vocab = data::build_vocabulary(data);
  for (const auto& c : data.classes) {
    if (vocab.count_unknown(templ.instantiate(c)) != 0) {
      throw ConfigError("prompts.classification: \"" + templ.instantiate(c) +
                        "\" has words outside the vocabulary");
    }
  }
}

namespace {

using Keys = std::set<std::string_view>;

void check_keys(const toml::table& t, const Keys& allowed, const std::string& where) {
  for (const auto& [k, v] : t) {
    if (!allowed.contains(k.str())) {
      throw ConfigError((where.empty() ? "" : where + ".") + std::string(k.str()) +
                        ": unknown key");
    }
  }
}

const toml::table* section(const toml::table& root, std::string_view name, const Keys& allowed) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw ConfigError(std::string(name) + ": expected a table");
  check_keys(*t, allowed, std::string(name));
  return t;
}

std::string key_name(std::string_view where, std::string_view key) {
  return where.empty() ? std::string(key) : std::string(where) + "." + std::string(key);
}

template <typename T>
void read(const toml::table* t, std::string_view where, std::string_view key, T& out) {
  if (!t) return;
  const auto* node = t->get(key);
  if (!node) return;
  const auto name = key_name(where, key);
  if constexpr (std::is_same_v<T, bool>) {
    const auto v = node->value<bool>();
    if (!node->is_boolean() || !v) throw ConfigError(name + ": expected a boolean");
    out = *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!node->is_number()) throw ConfigError(name + ": expected a number");
    out = *node->value<double>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!node->is_integer()) throw ConfigError(name + ": expected an integer");
    const auto v = *node->value<std::int64_t>();
    if (v < 0) throw ConfigError(name + ": must not be negative");
    out = static_cast<T>(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!node->is_string()) throw ConfigError(name + ": expected a string");
    out = *node->value<std::string>();
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    const auto* arr = node->as_array();
    if (!arr) throw ConfigError(name + ": expected an array of strings");
    out.clear();
    for (const auto& item : *arr) {
      if (!item.is_string()) throw ConfigError(name + ": expected an array of strings");
      out.push_back(*item.value<std::string>());
    }
  }
}

template <typename T>
void read_opt(const toml::table* t, std::string_view where, std::string_view key,
              std::optional<T>& out) {
  if (!t || !t->get(key)) return;
  T v{};
  read(t, where, key, v);
  out = v;
}

}  // namespace

RunConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    throw ConfigError(std::string(source) + ":" + std::to_string(where.line) + ":" +
                      std::to_string(where.column) + ": " + std::string(e.description()));
  }
  check_keys(root,
             {"seed", "output", "parallelism", "task", "data", "model", "train", "attack", "eval",
              "prompts"},
             "");
  RunConfig cfg;
  read(&root, "", "seed", cfg.seed);
  std::string output = cfg.output.string();
  read(&root, "", "output", output);
  cfg.output = output;
  read(&root, "", "parallelism", cfg.parallelism);
  std::string task = to_string(cfg.task);
  read(&root, "", "task", task);
  cfg.task = parse_task(task);

  if (const auto* t = section(root, "data", {"classes", "colors", "per_class", "height", "width",
                                             "channels", "noise_std"})) {
    read(t, "data", "classes", cfg.data.classes);
    read(t, "data", "colors", cfg.data.colors);
    read(t, "data", "per_class", cfg.data.per_class);
    read(t, "data", "height", cfg.data.height);
    read(t, "data", "width", cfg.data.width);
    read(t, "data", "channels", cfg.data.channels);
    read(t, "data", "noise_std", cfg.data.noise_std);
  }
  if (const auto* t = section(root, "model", {"patch", "patch_embed", "hidden", "embed_dim",
                                              "token_dim", "text_hidden", "init_temperature"})) {
    read(t, "model", "patch", cfg.model.patch);
    read(t, "model", "patch_embed", cfg.model.patch_embed);
    read(t, "model", "hidden", cfg.model.hidden);
    read(t, "model", "embed_dim", cfg.model.embed_dim);
    read(t, "model", "token_dim", cfg.model.token_dim);
    read(t, "model", "text_hidden", cfg.model.text_hidden);
    read(t, "model", "init_temperature", cfg.model.init_temperature);
  }
  if (const auto* t = section(root, "train", {"epochs", "batch", "lr"})) {
    read(t, "train", "epochs", cfg.train.epochs);
    read(t, "train", "batch", cfg.train.batch);
    read(t, "train", "lr", cfg.train.lr);
  }
  if (const auto* t = section(root, "attack", {"method", "setting", "steps", "step_size",
                                               "epsilon", "c", "kappa"})) {
    std::string method = attacks::to_string(cfg.method), setting = attacks::to_string(cfg.setting);
    read(t, "attack", "method", method);
    read(t, "attack", "setting", setting);
    try {
      cfg.method = attacks::parse_method(method);
      cfg.setting = attacks::parse_setting(setting);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("attack: ") + e.what());
    }
    read_opt(t, "attack", "steps", cfg.overrides.steps);
    read_opt(t, "attack", "step_size", cfg.overrides.step_size);
    read_opt(t, "attack", "epsilon", cfg.overrides.epsilon);
    read_opt(t, "attack", "c", cfg.overrides.c);
    read_opt(t, "attack", "kappa", cfg.overrides.kappa);
  }
  if (const auto* t = section(root, "eval", {"with_context", "context_weight", "qd", "k"})) {
    read(t, "eval", "with_context", cfg.eval.with_context);
    read(t, "eval", "context_weight", cfg.eval.context_weight);
    read(t, "eval", "qd", cfg.eval.qd);
    read(t, "eval", "k", cfg.eval.k);
  }
  if (const auto* t = section(root, "prompts", {"classification"})) {
    read(t, "prompts", "classification", cfg.classification_template);
  }
  cfg.resolve();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  return parse_config(read_text_file(path), path.string());
}

std::string RunConfig::to_toml(bool runtime) const {
  const auto strings = [](const std::vector<std::string>& v) {
    toml::array a;
    for (const auto& s : v) a.push_back(s);
    return a;
  };
  const auto i64 = [](std::uint64_t v) { return static_cast<std::int64_t>(v); };
  toml::table root;
  root.insert("seed", i64(seed));
  if (runtime) {
    root.insert("output", output.string());
    root.insert("parallelism", i64(parallelism));
  }
  root.insert("task", to_string(task));
  root.insert("data", toml::table{{"classes", strings(data.classes)},
                                  {"colors", strings(data.colors)},
                                  {"per_class", i64(data.per_class)},
                                  {"height", i64(data.height)},
                                  {"width", i64(data.width)},
                                  {"channels", i64(data.channels)},
                                  {"noise_std", data.noise_std}});
  root.insert("model", toml::table{{"patch", i64(model.patch)},
                                   {"patch_embed", i64(model.patch_embed)},
                                   {"hidden", i64(model.hidden)},
                                   {"embed_dim", i64(model.embed_dim)},
                                   {"token_dim", i64(model.token_dim)},
                                   {"text_hidden", i64(model.text_hidden)},
                                   {"init_temperature", model.init_temperature}});
  root.insert("train", toml::table{{"epochs", i64(train.epochs)},
                                   {"batch", i64(train.batch)},
                                   {"lr", train.lr}});
  const auto a = attack_config();
  toml::table attack{{"method", attacks::to_string(method)},
                     {"setting", attacks::to_string(setting)},
                     {"steps", i64(a.steps)}};
  if (a.method == attacks::Method::kCw) {
    attack.insert("step_size", *a.step_size);
    attack.insert("c", a.c);
    attack.insert("kappa", a.kappa);
  } else {
    if (a.step_size) attack.insert("step_size", *a.step_size);
    attack.insert("epsilon", a.epsilon);
  }
  root.insert("attack", std::move(attack));
  root.insert("eval", toml::table{{"with_context", eval.with_context},
                                  {"context_weight", eval.context_weight},
                                  {"qd", eval.qd},
                                  {"k", i64(eval.k)}});
  root.insert("prompts", toml::table{{"classification", classification_template}});
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

}  // namespace vlwb::config
