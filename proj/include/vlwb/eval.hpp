#pragma once

// Accuracy and recall metrics, percent-change annotation, per-group
// breakdowns and the CSV / Markdown / SVG report writers.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlwb/datagen.hpp"
#include "vlwb/tasks.hpp"

namespace vlwb::eval {

/// Percent of images whose argmax logit is the label. Throws on empty input.
double eval_classification(const tasks::ClassificationTarget& target,
                           std::span<const Tensor> images, std::span<const std::size_t> labels,
                           std::size_t parallelism = 1);

/// Every caption of every gallery sample, embedded individually.
struct CaptionGallery {
  std::vector<std::string> texts;          // 5 per sample, sample-major
  std::vector<std::size_t> owner;          // gallery index of each caption
  std::shared_ptr<const Tensor> embeddings;  // [5G, embed_dim]

  /// True when caption `c` reads exactly like one of sample `j`'s captions.
  bool matches(std::size_t c, const data::ImageSample& sample) const;
};

/// Throws std::invalid_argument for fewer than 2 samples.
CaptionGallery build_caption_gallery(const model::EncoderParams& params,
                                     const data::Vocabulary& vocab,
                                     std::span<const data::ImageSample> gallery);

/// Image-to-text recall@1 in percent. Query j is the image of gallery[j]
/// (clean or attacked); it is a hit when its top caption has the same text as
/// one of gallery[j]'s captions.
double eval_retrieval_recall1(const model::EncoderParams& params, const CaptionGallery& bank,
                              std::span<const data::ImageSample> gallery,
                              std::span<const Tensor> queries, std::size_t parallelism = 1);

enum class AnswerTask { kClassification, kRetrieval };

/// Everything eval_answerer needs besides the answerer and images.
struct AnswerContext {
  const model::EncoderParams* params = nullptr;
  const data::Vocabulary* vocab = nullptr;
  const data::ClassVocab* classes = nullptr;
  const tasks::ClassificationTarget* target = nullptr;  // classification
  const CaptionGallery* captions = nullptr;             // retrieval
};

/// Classification: asks the open question (with the gold class's context when
/// `with_context`) and maps the answer through answer_to_class; misses count
/// as errors. Retrieval: asks for a caption, embeds it and scores recall@1
/// against the caption gallery. Returns percent.
double eval_answerer(const tasks::Answerer& answerer, std::span<const data::ImageSample> samples,
                     std::span<const Tensor> images, AnswerTask task, bool with_context,
                     const AnswerContext& ctx, std::size_t parallelism = 1);

/// Query-decomposition accuracy in percent; candidates are drawn per sample
/// from (seed, sample id).
double eval_qd(const tasks::Answerer& answerer, std::span<const data::ImageSample> samples,
               std::span<const Tensor> images, const data::ClassVocab& classes, std::size_t k,
               std::uint64_t seed, std::size_t parallelism = 1);

/// (post - pre) / pre * 100; empty when pre is 0 or either value is NaN.
std::optional<double> percent_change(double pre, double post);
/// Integer, half away from zero, with sign: "-81", "+4", "0"; "n/a" if empty.
std::string display_change(std::optional<double> change);

struct MetricRow {
  std::string model;
  std::string task;
  std::string method;
  double pre = 0.0;
  double post_normal = 0.0;  // NaN when that attack was not run
  double post_strong = 0.0;
  std::optional<double> change_normal;
  std::optional<double> change_strong;
  bool score_valued = false;  // not a percentage

  /// Fills the change fields from pre / post.
  static MetricRow make(std::string model, std::string task, std::string method, double pre,
                        double post_normal, double post_strong);
};

struct BreakdownRow {
  std::string key;
  std::size_t count = 0;
  double pre = 0.0;   // percent
  double post = 0.0;  // percent
  double drop = 0.0;  // pre - post, percentage points
};

struct Breakdown {
  std::string title;
  std::vector<BreakdownRow> rows;  // descending by drop
  std::vector<std::string> notes;
};

/// Groups per-item correctness by key. Keys listed in `expected` that have no
/// items are omitted and mentioned in notes.
Breakdown breakdown_by(std::string title, std::span<const std::string> keys,
                       const std::vector<bool>& pre_correct, const std::vector<bool>& post_correct,
                       std::span<const std::string> expected = {});

struct EvalReport {
  std::vector<MetricRow> rows;
  std::vector<Breakdown> breakdowns;
  std::string config_echo;  // TOML
  std::uint64_t seed = 0;
  std::size_t gallery_images = 0;
};

std::string render_csv(const EvalReport& report);
std::string render_markdown(const EvalReport& report);
std::string render_svg(const Breakdown& breakdown);

/// Writes report.csv, report.md and breakdown.svg (first breakdown) to `dir`.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace vlwb::eval
