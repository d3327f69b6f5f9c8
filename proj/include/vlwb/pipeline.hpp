#pragma once

// Run-directory stages shared by the command-line tool and the acceptance
// suite: gen-data -> train -> attack -> eval -> report, plus QD and verify.
//
// Layout under cfg.output:
//   data/{manifest.json, images/, config.toml}
//   model/{params.vlwb, train_log.json, config.toml}
//   attacks/<task>-<method>-<setting>/{results.json, adv/, config.toml}
//   eval/{metrics.json, qd.json, config.toml}
//   report.csv, report.md, breakdown.svg

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlwb/attacks.hpp"
#include "vlwb/config.hpp"
#include "vlwb/eval.hpp"
#include "vlwb/tasks.hpp"

namespace vlwb::pipeline {

using config::RunConfig;
using config::Task;

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path model() const { return root / "model"; }
  std::filesystem::path params() const { return model() / "params.vlwb"; }
  std::filesystem::path attack(Task task, attacks::Method m, attacks::Setting s) const;
  std::filesystem::path eval() const { return root / "eval"; }
};

/// Writes the resolved config as <dir>/config.toml.
void write_snapshot(const std::filesystem::path& dir, const RunConfig& cfg);

data::Dataset gen_data(const RunConfig& cfg);
model::TrainResult train(const RunConfig& cfg);

/// Loaded data and model of a run, with the shared text banks.
struct Workbench {
  RunConfig cfg;
  data::Dataset dataset;
  data::Vocabulary vocab;
  data::ClassVocab classes;
  tasks::ParamsPtr params;
  std::vector<data::ImageSample> val;
  tasks::ClassificationTarget target;

  std::vector<Tensor> val_images() const;
  std::vector<std::size_t> val_labels() const;
};

/// Throws IoError when the data or the model is missing.
Workbench open(const RunConfig& cfg);

/// Attacks every val image against the task's target and writes the
/// attack directory (replacing an older one).
attacks::BatchResult attack(const Workbench& wb, Task task, attacks::Method m,
                            attacks::Setting s);

/// All six Normal / Strong presets for `task`.
void attack_all(const Workbench& wb, Task task);

/// Adversarial val images of an attack run, in val order; aborted samples
/// keep their clean image. Empty when the run does not exist.
std::optional<std::vector<Tensor>> load_attack(const Workbench& wb, Task task, attacks::Method m,
                                               attacks::Setting s);

/// Metrics for every attack run present on disk; writes eval/metrics.json.
eval::EvalReport evaluate(const Workbench& wb);

/// QD vs plain answering on clean images and every classification attack
/// present; writes eval/qd.json and returns it.
std::string qd_classify(const Workbench& wb);

/// Reads eval/metrics.json and writes report.csv, report.md, breakdown.svg.
eval::EvalReport report(const RunConfig& cfg);

/// Checks the invariants of whatever artifacts exist; returns failures.
std::vector<std::string> verify(const RunConfig& cfg);

/// gen-data, train, every attack of every task, eval, report.
void run_all(const RunConfig& cfg);

}  // namespace vlwb::pipeline
