#pragma once

// Run configuration: TOML file plus command-line overrides.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "vlwb/attacks.hpp"
#include "vlwb/datagen.hpp"
#include "vlwb/model.hpp"
#include "vlwb/train.hpp"

namespace vlwb::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { kClassification, kRetrieval, kVqaSynthetic };
std::string to_string(Task task);
Task parse_task(std::string_view text);  // "classification" | "retrieval" | "vqa-synthetic"

/// Explicit values that replace fields of the selected (method, setting)
/// preset; the other presets are unaffected.
struct AttackOverrides {
  std::optional<std::size_t> steps;
  std::optional<double> step_size;
  std::optional<double> epsilon;
  std::optional<double> c;
  std::optional<double> kappa;
};

struct EvalOptions {
  bool with_context = true;
  double context_weight = 1.0;
  bool qd = true;
  std::size_t k = 8;
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output = "run";
  std::size_t parallelism = 1;
  Task task = Task::kClassification;
  data::SyntheticSpec data;  // data.seed is derived from `seed`
  model::ModelConfig model;  // image shape follows `data`
  model::TrainConfig train;  // train.seed is derived from `seed`
  attacks::Method method = attacks::Method::kPgd;
  attacks::Setting setting = attacks::Setting::kNormal;
  AttackOverrides overrides;
  EvalOptions eval;
  std::string classification_template = "a photo of {}";

  /// Derives component seeds and copies the image shape into the model.
  void resolve();
  /// Throws ConfigError naming the offending key.
  void validate() const;

  std::uint64_t attack_seed() const;
  std::uint64_t qd_seed() const;
  /// Preset for (method, setting) with overrides applied.
  attacks::AttackConfig attack_config() const;
  attacks::AttackConfig attack_config(attacks::Method m, attacks::Setting s) const;

  /// Fully resolved TOML. Without `runtime`, output and parallelism are left
  /// out, since they do not affect any result.
  std::string to_toml(bool runtime = true) const;
};

/// Parses TOML text over the defaults, then resolves and validates.
/// Unknown keys are errors.
RunConfig parse_config(std::string_view text, std::string_view source = "config");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace vlwb::config
