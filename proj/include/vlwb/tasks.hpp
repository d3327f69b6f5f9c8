#pragma once

// Attack targets per task, the answerer abstraction, and query decomposition.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlwb/attacks.hpp"
#include "vlwb/datagen.hpp"
#include "vlwb/model.hpp"
#include "vlwb/vocab.hpp"

namespace vlwb::tasks {

using ParamsPtr = std::shared_ptr<const model::EncoderParams>;

/// Texts and their unit embeddings, one row per text.
struct TextBank {
  std::vector<std::string> texts;
  std::shared_ptr<const Tensor> embeddings;  // [n, embed_dim]

  std::size_t size() const noexcept { return texts.size(); }
};

/// Throws std::invalid_argument if any text contains an unknown word.
TextBank embed_texts(const model::EncoderParams& params, const data::Vocabulary& vocab,
                     std::vector<std::string> texts);

/// logits_i = temperature * cos(image embedding, bank row i).
attacks::ScorerGraph bank_scorer(ParamsPtr params, std::shared_ptr<const Tensor> bank,
                                 std::size_t label);

/// Forward-only version of bank_scorer's logits.
std::vector<double> bank_logits(const model::EncoderParams& params, const Tensor& bank,
                                const Tensor& image);

struct ClassificationTarget {
  ParamsPtr params;
  TextBank bank;  // one prompt per class

  attacks::ScorerGraph scorer(std::size_t label) const;
  std::vector<double> logits(const Tensor& image) const;
};

/// One embedding per class from `templ`, e.g. "a photo of {}".
ClassificationTarget build_classification_logits(ParamsPtr params, const data::Vocabulary& vocab,
                                                 const data::ClassVocab& classes,
                                                 const data::PromptTemplate& templ);

/// Renormalized mean of the caption embeddings. Rejects a caption made only
/// of unknown words.
model::Embedding caption_mean(const model::EncoderParams& params, const data::Vocabulary& vocab,
                              std::span<const std::string> captions);
/// caption_mean over exactly the sample's five captions.
model::Embedding build_caption_target(const model::EncoderParams& params,
                                      const data::Vocabulary& vocab,
                                      const data::ImageSample& sample);

/// Per-image text anchors for a gallery; scorer(j) has ground truth j.
struct RetrievalTarget {
  ParamsPtr params;
  std::vector<std::string> ids;
  std::shared_ptr<const Tensor> targets;  // [G, embed_dim]

  std::size_t size() const noexcept { return ids.size(); }
  attacks::ScorerGraph scorer(std::size_t index) const;
};

RetrievalTarget build_retrieval_scorer(ParamsPtr params, const data::Vocabulary& vocab,
                                       std::span<const data::ImageSample> gallery);

/// "a <color> <shape> in the <position>".
std::string synth_caption_for_attack(const data::ImageSample& sample,
                                     const std::vector<std::string>& classes);

/// Retrieval-style target whose anchors are single synthetic captions.
RetrievalTarget build_synthetic_target(ParamsPtr params, const data::Vocabulary& vocab,
                                       std::span<const data::ImageSample> gallery,
                                       const std::vector<std::string>& classes);

// ---------------------------------------------------------------------------
// Answerers

struct Answer {
  std::string text;
  double confidence = 0.0;  // in [0, 1]
};

/// Stand-in for a multimodal model: answers a text prompt about an image.
/// Implementations must be deterministic and safe for concurrent calls.
class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual Answer answer(const Tensor& image, std::string_view prompt) const = 0;
};

enum class AnswerMode { kClassification, kCaptioning };

/// Prompts understood by the reference answerer.
std::string existence_prompt(const data::ClassVocab& classes, std::size_t cls, bool with_context);
std::string question_prompt(const data::ClassVocab& classes, std::size_t cls, bool with_context);
std::string caption_prompt(const data::ClassVocab& classes);
std::string color_existence_prompt(std::string_view color);
std::string position_existence_prompt(std::string_view position);

/// Nearest-text-embedding answerer.
///
/// Open questions are answered with the nearest class name (classification
/// mode) or the nearest synthetic caption (captioning mode). Existence
/// questions about a class, a color ("is there a red object ...") or a
/// position ("is the object in the upper left ...") answer "yes" when
/// the asked value scores highest among its kind. A known class context
/// appended to the prompt adds context_weight to the score of the class it
/// names (or, naming none, of the class nearest to it in text embedding). Confidence is the top-two softmax margin for open
/// questions and the probability of the given answer for existence ones.
class ReferenceAnswerer : public Answerer {
 public:
  ReferenceAnswerer(ParamsPtr params, const data::Vocabulary& vocab, data::ClassVocab classes,
                    const std::vector<std::string>& colors, AnswerMode mode,
                    double context_weight = 1.0);

  Answer answer(const Tensor& image, std::string_view prompt) const override;

  AnswerMode mode() const noexcept { return mode_; }
  const TextBank& caption_bank() const noexcept { return captions_; }

 private:
  std::vector<double> class_scores(const model::Embedding& img,
                                   std::optional<std::size_t> context_class) const;
  std::optional<std::size_t> context_in(std::string_view rest) const;

  ParamsPtr params_;
  data::ClassVocab classes_;
  AnswerMode mode_;
  double context_weight_;
  TextBank names_, contexts_, colors_, positions_, captions_;
  std::vector<std::size_t> context_refers_;  // class each context sentence names
};

/// Index returned by answer_to_class when the answer has no known word.
inline constexpr std::size_t kMiss = std::numeric_limits<std::size_t>::max();

/// Embeds "a photo of <answer>" and returns the nearest class of `target`.
std::size_t answer_to_class(std::string_view answer, const ClassificationTarget& target,
                            const data::Vocabulary& vocab, const data::PromptTemplate& templ);

// ---------------------------------------------------------------------------
// Query decomposition

/// Sorted distinct class indices containing the gold class.
struct CandidateSet {
  std::vector<std::size_t> indices;
};

/// k classes including `gold`, drawn with an RNG keyed by (seed, sample id).
/// k equal to the class count yields every class. Throws if k < 2 or k > n.
CandidateSet sample_candidates(std::size_t num_classes, std::size_t k, std::size_t gold,
                               std::uint64_t seed, std::string_view sample_id);

/// Yes-confidence of an existence answer.
double yes_confidence(const Answer& a);

/// Asks one existence question (with that class's context) per candidate and
/// returns the most confident candidate; ties go to the lowest index.
std::size_t query_decomposition_classify(const Answerer& answerer, const Tensor& image,
                                         const data::ClassVocab& classes,
                                         const CandidateSet& candidates);

}  // namespace vlwb::tasks
