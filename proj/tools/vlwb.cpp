// vlwb: command-line front end for the robustness workbench.
//
// Settings are resolved as built-in defaults < --config file < flags.
// Exit codes: 0 success, 1 verification or run failure, 2 usage or config
// error, 3 I/O error. Errors are one line on stderr: "vlwb: error[<kind>]: ...".

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlwb/config.hpp"
#include "vlwb/imageio.hpp"
#include "vlwb/pipeline.hpp"
#include "vlwb/train.hpp"

namespace {

using namespace vlwb;
using config::RunConfig;

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3 };

int fail(Exit code, const std::string& kind, std::string message) {
  for (char& c : message)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "vlwb: error[%s]: %s\n", kind.c_str(), message.c_str());
  return code;
}

struct Flags {
  std::string config;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  // gen-data
  std::optional<std::size_t> classes, per_class;
  std::optional<double> noise_std;
  // train
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
  // attack
  std::optional<std::string> task, method, setting;
  std::optional<std::size_t> steps;
  std::optional<double> step_size, epsilon, c, kappa;
  bool all = false;
  // eval / qd
  std::optional<double> context_weight;
  std::optional<std::size_t> k;
  bool no_context = false, no_qd = false;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : config::load_config(f.config);
  if (f.output) cfg.output = *f.output;
  if (f.seed) cfg.seed = *f.seed;
  if (f.parallelism) cfg.parallelism = *f.parallelism;
  if (f.classes) {
    const auto defaults = data::SyntheticSpec{}.classes;
    if (*f.classes < 1 || *f.classes > defaults.size()) {
      throw config::ConfigError("--classes: must lie in [1, " + std::to_string(defaults.size()) +
                                "]; list other names in the config file");
    }
    cfg.data.classes.assign(defaults.begin(), defaults.begin() + *f.classes);
  }
  if (f.per_class) cfg.data.per_class = *f.per_class;
  if (f.noise_std) cfg.data.noise_std = *f.noise_std;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.batch) cfg.train.batch = *f.batch;
  if (f.lr) cfg.train.lr = *f.lr;
  if (f.task) cfg.task = config::parse_task(*f.task);
  try {
    if (f.method) cfg.method = attacks::parse_method(*f.method);
    if (f.setting) cfg.setting = attacks::parse_setting(*f.setting);
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  if (f.steps) cfg.overrides.steps = *f.steps;
  if (f.step_size) cfg.overrides.step_size = *f.step_size;
  if (f.epsilon) cfg.overrides.epsilon = *f.epsilon;
  if (f.c) cfg.overrides.c = *f.c;
  if (f.kappa) cfg.overrides.kappa = *f.kappa;
  if (f.context_weight) cfg.eval.context_weight = *f.context_weight;
  if (f.k) cfg.eval.k = *f.k;
  if (f.no_context) cfg.eval.with_context = false;
  if (f.no_qd) cfg.eval.qd = false;
  if (cfg.eval.k > cfg.data.classes.size() && !f.k) cfg.eval.k = cfg.data.classes.size();
  cfg.resolve();
  cfg.validate();
  return cfg;
}

void print_summary(const std::string& name, const attacks::BatchSummary& s) {
  std::printf("%s: pre %.2f%% post %.2f%% mean linf %.6f mean l2 %.6f aborted %zu/%zu\n",
              name.c_str(), s.pre_accuracy, s.post_accuracy, s.mean_linf, s.mean_l2, s.aborted,
              s.count);
}

int run(int argc, char** argv) {
  CLI::App app{"Adversarial robustness workbench for a toy contrastive image/text encoder"};
  app.require_subcommand(1, 1);
  Flags f;
  app.add_option("--config", f.config, "TOML run config")->check(CLI::ExistingFile);
  app.add_option("--output", f.output, "Run directory");
  app.add_option("--seed", f.seed, "Master seed");
  app.add_option("--parallelism", f.parallelism, "Worker threads");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen->add_option("--classes", f.classes, "Use the first N built-in classes");
  gen->add_option("--per-class", f.per_class, "Images per class");
  gen->add_option("--noise-std", f.noise_std, "Gaussian pixel noise");

  auto* train = app.add_subcommand("train", "Train the encoders");
  train->add_option("--epochs", f.epochs);
  train->add_option("--batch", f.batch);
  train->add_option("--lr", f.lr);

  auto* attack = app.add_subcommand("attack", "Attack the val set");
  attack->add_option("--task", f.task, "classification | retrieval | vqa-synthetic");
  attack->add_option("--method", f.method, "pgd | apgd | cw");
  attack->add_option("--setting", f.setting, "normal | strong");
  attack->add_option("--steps", f.steps);
  attack->add_option("--step-size", f.step_size);
  attack->add_option("--epsilon", f.epsilon);
  attack->add_option("--c", f.c);
  attack->add_option("--kappa", f.kappa);
  attack->add_flag("--all", f.all, "Run all six presets for the task");

  auto* evalc = app.add_subcommand("eval", "Compute metrics for every attack run present");
  evalc->add_option("--context-weight", f.context_weight);
  evalc->add_option("--k", f.k, "QD candidate count");
  evalc->add_flag("--no-context", f.no_context);
  evalc->add_flag("--no-qd", f.no_qd);

  auto* qd = app.add_subcommand("qd-classify", "Query-decomposition vs plain answering");
  qd->add_option("--k", f.k, "Candidate count");
  qd->add_option("--context-weight", f.context_weight);

  auto* report = app.add_subcommand("report", "Write report.csv, report.md, breakdown.svg");
  auto* verify = app.add_subcommand("verify", "Check invariants of the run's artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    const RunConfig cfg = resolve(f);
    const pipeline::RunPaths paths{cfg.output};
    if (gen->parsed()) {
      const auto ds = pipeline::gen_data(cfg);
      std::printf("gen-data: %zu samples -> %s\n", ds.samples.size(),
                  (paths.data() / "manifest.json").string().c_str());
    } else if (train->parsed()) {
      const auto result = pipeline::train(cfg);
      const double acc = result.curve.empty() ? 0.0 : result.curve.back().val_accuracy;
      std::printf("train: %zu epochs, val accuracy %.4f -> %s\n", result.curve.size(), acc,
                  paths.params().string().c_str());
    } else if (attack->parsed()) {
      const auto wb = pipeline::open(cfg);
      if (f.all) {
        for (const auto m : {attacks::Method::kPgd, attacks::Method::kApgd, attacks::Method::kCw}) {
          for (const auto s : {attacks::Setting::kNormal, attacks::Setting::kStrong}) {
            const auto b = pipeline::attack(wb, cfg.task, m, s);
            print_summary(paths.attack(cfg.task, m, s).string(), b.summary);
          }
        }
      } else {
        const auto b = pipeline::attack(wb, cfg.task, cfg.method, cfg.setting);
        print_summary(paths.attack(cfg.task, cfg.method, cfg.setting).string(), b.summary);
      }
    } else if (evalc->parsed()) {
      const auto r = pipeline::evaluate(pipeline::open(cfg));
      std::printf("eval: %zu rows -> %s\n", r.rows.size(),
                  (paths.eval() / "metrics.json").string().c_str());
    } else if (qd->parsed()) {
      std::cout << pipeline::qd_classify(pipeline::open(cfg));
    } else if (report->parsed()) {
      pipeline::report(cfg);
      std::printf("report: %s\n", (paths.root / "report.md").string().c_str());
    } else if (verify->parsed()) {
      const auto failures = pipeline::verify(cfg);
      for (const auto& msg : failures) std::printf("FAIL %s\n", msg.c_str());
      if (!failures.empty()) {
        return fail(kFailure, "verify", std::to_string(failures.size()) + " invariant failure(s)");
      }
      std::printf("verify: ok\n");
    }
  } catch (const config::ConfigError& e) {
    return fail(kUsage, "config", e.what());
  } catch (const IoError& e) {
    return fail(kIo, "io", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kIo, "io", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kIo, "io", e.what());
  } catch (const model::TrainingDiverged& e) {
    return fail(kFailure, "train", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(kFailure, "runtime", e.what());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
