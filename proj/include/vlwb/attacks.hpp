#pragma once

// Untargeted white-box attacks (PGD, APGD, CW) against any differentiable
// image -> logits map.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlwb/diff.hpp"
#include "vlwb/tensor.hpp"

namespace vlwb::attacks {

enum class Method { kPgd, kApgd, kCw };
enum class Norm { kLinf, kL2 };
enum class Setting { kNormal, kStrong };

std::string to_string(Method m);
std::string to_string(Setting s);
Method parse_method(std::string_view text);  // "pgd" | "apgd" | "cw", any case
Setting parse_setting(std::string_view text);  // "normal" | "strong"

struct AttackConfig {
  Method method = Method::kPgd;
  std::size_t steps = 20;
  std::optional<double> step_size;  // absent for APGD
  double epsilon = 8.0 / 255.0;     // L-inf radius, PGD and APGD
  double c = 0.0;                   // CW constraint weight
  double kappa = 0.0;               // CW confidence
  Norm norm = Norm::kLinf;
  Setting setting = Setting::kNormal;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the violated field.
  void validate() const;
};

/// The Normal / Strong parameterizations of each method.
AttackConfig preset(Method method, Setting setting);

/// Maps an image variable on `g` to a 1-D logit vector.
using LogitFn = std::function<diff::Var(diff::Graph& g, diff::Var image)>;

/// Differentiable scorer plus the ground-truth index. `prepare` is called once
/// per attack to place fixed tensors on the graph; the returned function is
/// then evaluated once per step.
struct ScorerGraph {
  std::function<LogitFn(diff::Graph&)> prepare;
  std::size_t label = 0;

  /// Logits at `image` without building a gradient.
  std::vector<double> logits(const Tensor& image) const;
};

/// logits = W x + b for a flattened image x; W is [k, n].
ScorerGraph linear_scorer(Tensor weights, std::vector<double> bias, std::size_t label);

/// First index of the maximum.
std::size_t argmax(std::span<const double> values);

struct AttackResult {
  Tensor delta;
  Tensor adv_image;
  double linf_norm = 0.0;
  double l2_norm = 0.0;
  double initial_loss = 0.0;             // objective at the clean image
  std::vector<double> loss_trajectory;   // objective after each of the `steps` updates
  std::vector<double> step_sizes;        // APGD: step used by each update
  bool success = false;                  // argmax of adversarial logits != label
  double best_objective = 0.0;           // max (PGD/APGD) or min (CW) over initial + trajectory
  double returned_objective = 0.0;       // objective of the returned iterate
};

class AttackAborted : public std::runtime_error {
 public:
  AttackAborted(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Cross-entropy of the logits at the label.
double cross_entropy(std::span<const double> logits, std::size_t label);
/// CW hinge: max(z_y - max_{i != y} z_i, -kappa).
double cw_margin_loss(std::span<const double> logits, std::size_t label, double kappa);

AttackResult pgd_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg);
AttackResult apgd_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg);
AttackResult cw_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg);
/// Dispatches on cfg.method.
AttackResult run_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg);

/// APGD checkpoint iterations for a budget of `steps` updates.
std::vector<std::size_t> apgd_checkpoints(std::size_t steps);

struct BatchItem {
  std::string id;
  std::optional<AttackResult> result;  // empty when the attack aborted
  std::string error;
  bool clean_correct = false;
  bool adv_correct = false;  // clean correctness is kept for aborted items
};

struct BatchSummary {
  std::size_t count = 0;
  std::size_t aborted = 0;
  double pre_accuracy = 0.0;   // percent
  double post_accuracy = 0.0;  // percent
  double mean_linf = 0.0;
  double mean_l2 = 0.0;
};

struct BatchResult {
  std::vector<BatchItem> items;
  BatchSummary summary;
};

/// Builds the scorer for sample i of a batch.
using ScorerFactory = std::function<ScorerGraph(std::size_t index)>;

/// Attacks every image; per-sample aborts are recorded and the batch goes on.
/// Results do not depend on `parallelism`.
BatchResult run_attack_batch(const ScorerFactory& factory, const std::vector<std::string>& ids,
                             const std::vector<Tensor>& images, const AttackConfig& cfg,
                             std::size_t parallelism);

/// Writes results.json and one adv/<id>.imgf32 per successful run.
void write_batch(const std::filesystem::path& dir, const BatchResult& batch,
                 const AttackConfig& cfg, const std::string& task);

}  // namespace vlwb::attacks
