#include "vlwb/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "vlwb/rng.hpp"

namespace vlwb::tasks {

using diff::Graph;
using diff::Var;
using model::Embedding;

TextBank embed_texts(const model::EncoderParams& params, const data::Vocabulary& vocab,
                     std::vector<std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("embed_texts: no texts");
  std::vector<std::vector<std::size_t>> bags;
  bags.reserve(texts.size());
  for (const auto& t : texts) {
    if (vocab.count_unknown(t) != 0) {
      throw std::invalid_argument("embed_texts: unknown word in \"" + t + "\"");
    }
    bags.push_back(vocab.encode(t));
  }
  TextBank bank;
  bank.embeddings = std::make_shared<const Tensor>(model::encode_texts(params, bags));
  bank.texts = std::move(texts);
  return bank;
}

attacks::ScorerGraph bank_scorer(ParamsPtr params, std::shared_ptr<const Tensor> bank,
                                 std::size_t label) {
  if (!params || !bank) throw std::invalid_argument("bank_scorer: null model or bank");
  if (bank->rank() != 2 || bank->dim(1) != params->config.embed_dim) {
    throw ShapeError("bank_scorer: bank " + to_string(bank->shape()) +
                     " does not match embed_dim " + std::to_string(params->config.embed_dim));
  }
  if (label >= bank->dim(0)) throw std::out_of_range("bank_scorer: label outside the bank");
  attacks::ScorerGraph s;
  s.label = label;
  s.prepare = [params = std::move(params), bank = std::move(bank)](Graph& g) -> attacks::LogitFn {
    const auto bound = model::bind(g, *params, false);
    const Var texts = g.constant(*bank);
    const std::size_t n = bank->dim(0);
    const double temperature = params->temperature;
    return [bound, texts, n, temperature](Graph&, Var image) {
      const Var emb = model::image_embeddings(bound, image);
      return diff::scale(diff::reshape(diff::cosine_similarity(emb, texts), {n}), temperature);
    };
  };
  return s;
}

std::vector<double> bank_logits(const model::EncoderParams& params, const Tensor& bank,
                                const Tensor& image) {
  auto p = std::make_shared<const model::EncoderParams>(params);
  return bank_scorer(std::move(p), std::make_shared<const Tensor>(bank), 0).logits(image);
}

attacks::ScorerGraph ClassificationTarget::scorer(std::size_t label) const {
  return bank_scorer(params, bank.embeddings, label);
}

std::vector<double> ClassificationTarget::logits(const Tensor& image) const {
  return scorer(0).logits(image);
}

ClassificationTarget build_classification_logits(ParamsPtr params, const data::Vocabulary& vocab,
                                                 const data::ClassVocab& classes,
                                                 const data::PromptTemplate& templ) {
  if (!params) throw std::invalid_argument("build_classification_logits: null model");
  if (classes.size() == 0) throw std::invalid_argument("build_classification_logits: no classes");
  std::vector<std::string> prompts;
  for (const auto& c : classes.classes) prompts.push_back(templ.instantiate(c));
  ClassificationTarget t;
  t.bank = embed_texts(*params, vocab, std::move(prompts));
  t.params = std::move(params);
  return t;
}

Embedding caption_mean(const model::EncoderParams& params, const data::Vocabulary& vocab,
                       std::span<const std::string> captions) {
  if (captions.empty()) throw std::invalid_argument("caption_mean: no captions");
  std::vector<std::vector<std::size_t>> bags;
  for (const auto& c : captions) {
    const auto words = data::tokenize(c);
    if (words.empty() || vocab.count_unknown(c) == words.size()) {
      throw std::invalid_argument("caption_mean: caption has no known word: \"" + c + "\"");
    }
    bags.push_back(vocab.encode(c));
  }
  const Tensor rows = model::encode_texts(params, bags);
  const std::size_t d = rows.dim(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < bags.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += rows[i * d + j];
  double norm = 0.0;
  for (double v : mean) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw std::invalid_argument("caption_mean: captions cancel out");
  for (double& v : mean) v /= norm;
  return Embedding(std::move(mean));
}

Embedding build_caption_target(const model::EncoderParams& params, const data::Vocabulary& vocab,
                               const data::ImageSample& sample) {
  return caption_mean(params, vocab, sample.captions);
}

attacks::ScorerGraph RetrievalTarget::scorer(std::size_t index) const {
  return bank_scorer(params, targets, index);
}

namespace {

RetrievalTarget make_target(ParamsPtr params, std::span<const data::ImageSample> gallery,
                            const std::function<Embedding(const data::ImageSample&)>& anchor) {
  if (!params) throw std::invalid_argument("retrieval: null model");
  if (gallery.size() < 2) throw std::invalid_argument("retrieval: gallery needs >= 2 images");
  std::set<std::string> seen;
  RetrievalTarget t;
  std::vector<Embedding> rows;
  for (const auto& s : gallery) {
    if (!seen.insert(s.id).second) throw std::invalid_argument("retrieval: duplicate id " + s.id);
    t.ids.push_back(s.id);
    rows.push_back(anchor(s));
  }
  t.targets = std::make_shared<const Tensor>(model::stack(rows));
  t.params = std::move(params);
  return t;
}

}  // namespace

RetrievalTarget build_retrieval_scorer(ParamsPtr params, const data::Vocabulary& vocab,
                                       std::span<const data::ImageSample> gallery) {
  const auto* p = params.get();
  return make_target(std::move(params), gallery, [&](const data::ImageSample& s) {
    if (!p) throw std::invalid_argument("retrieval: null model");
    return build_caption_target(*p, vocab, s);
  });
}

std::string synth_caption_for_attack(const data::ImageSample& sample,
                                     const std::vector<std::string>& classes) {
  return "a " + sample.attributes.color + " " + classes.at(sample.class_index) + " in the " +
         sample.attributes.position;
}

RetrievalTarget build_synthetic_target(ParamsPtr params, const data::Vocabulary& vocab,
                                       std::span<const data::ImageSample> gallery,
                                       const std::vector<std::string>& classes) {
  const auto* p = params.get();
  return make_target(std::move(params), gallery, [&](const data::ImageSample& s) {
    if (!p) throw std::invalid_argument("retrieval: null model");
    const std::string caption = synth_caption_for_attack(s, classes);
    return caption_mean(*p, vocab, std::span<const std::string>(&caption, 1));
  });
}

// ---------------------------------------------------------------------------
// Answerers

namespace {

constexpr std::string_view kColorSuffix = " object";
constexpr std::string_view kPositionPrefix = "is the object in the ";
constexpr std::string_view kPositionSuffix = " of this image?";

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

std::string with_context(std::string prompt, const data::ClassVocab& classes, std::size_t cls,
                         bool add) {
  if (add) prompt += " " + classes.context(cls);
  return prompt;
}

std::vector<double> cosines(const Embedding& img, const Tensor& bank) {
  const std::size_t n = bank.dim(0), d = bank.dim(1);
  std::vector<double> out(n, 0.0);
  const auto v = img.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += v[j] * bank[i * d + j];
  return out;
}

std::vector<double> softmax(const std::vector<double>& scores, double temperature) {
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += p[i] = std::exp(temperature * (scores[i] - m));
  for (double& v : p) v /= z;
  return p;
}

double top_two_margin(const std::vector<double>& p) {
  if (p.size() < 2) return 1.0;
  double a = -1.0, b = -1.0;
  for (double v : p) {
    if (v > a) {
      b = a;
      a = v;
    } else if (v > b) {
      b = v;
    }
  }
  return std::clamp(a - b, 0.0, 1.0);
}

Answer existence_answer(const std::vector<double>& scores, std::size_t asked, double temperature) {
  const auto p = softmax(scores, temperature);
  const bool yes = attacks::argmax(scores) == asked;
  return {yes ? "yes" : "no", std::clamp(yes ? p[asked] : 1.0 - p[asked], 0.0, 1.0)};
}

std::optional<std::size_t> find_text(const std::vector<std::string>& texts, std::string_view t) {
  const auto it = std::find(texts.begin(), texts.end(), t);
  if (it == texts.end()) return std::nullopt;
  return static_cast<std::size_t>(it - texts.begin());
}

}  // namespace

std::string existence_prompt(const data::ClassVocab& classes, std::size_t cls, bool add_context) {
  return with_context(classes.templates.existence.instantiate(classes.classes.at(cls)), classes,
                      cls, add_context);
}

std::string question_prompt(const data::ClassVocab& classes, std::size_t cls, bool add_context) {
  return with_context(classes.templates.question.instantiate(""), classes, cls, add_context);
}

std::string caption_prompt(const data::ClassVocab& classes) {
  return classes.templates.caption.instantiate("");
}

std::string color_existence_prompt(std::string_view color) {
  return "is there a " + std::string(color) + std::string(kColorSuffix) + " in this image?";
}

std::string position_existence_prompt(std::string_view position) {
  return std::string(kPositionPrefix) + std::string(position) + std::string(kPositionSuffix);
}

ReferenceAnswerer::ReferenceAnswerer(ParamsPtr params, const data::Vocabulary& vocab,
                                     data::ClassVocab classes,
                                     const std::vector<std::string>& colors, AnswerMode mode,
                                     double context_weight)
    : params_(std::move(params)),
      classes_(std::move(classes)),
      mode_(mode),
      context_weight_(context_weight) {
  if (!params_) throw std::invalid_argument("answerer: null model");
  if (classes_.size() < 2) throw std::invalid_argument("answerer: need at least 2 classes");
  if (!std::isfinite(context_weight_)) throw std::invalid_argument("answerer: bad context weight");
  names_ = embed_texts(*params_, vocab, classes_.classes);
  contexts_ = embed_texts(*params_, vocab, classes_.contexts);
  // A context is read as a statement about the first class it names; one
  // naming no class goes to the class nearest in text embedding.
  for (std::size_t k = 0; k < contexts_.size(); ++k) {
    std::optional<std::size_t> named;
    for (const auto& word : data::tokenize(contexts_.texts[k])) {
      if ((named = find_text(classes_.classes, word))) break;
    }
    if (!named) {
      named = attacks::argmax(
          cosines(model::row_embedding(*contexts_.embeddings, k), *names_.embeddings));
    }
    context_refers_.push_back(*named);
  }
  colors_ = embed_texts(*params_, vocab, colors);
  const auto& tags = data::position_tags();
  positions_ = embed_texts(*params_, vocab, std::vector<std::string>(tags.begin(), tags.end()));
  std::vector<std::string> captions;
  for (const auto& shape : classes_.classes)
    for (const auto& color : colors)
      for (const auto& pos : tags) captions.push_back("a " + color + " " + shape + " in the " + pos);
  captions_ = embed_texts(*params_, vocab, std::move(captions));
}

std::optional<std::size_t> ReferenceAnswerer::context_in(std::string_view rest) const {
  rest = trim(rest);
  if (rest.empty()) return std::nullopt;
  return find_text(classes_.contexts, rest);
}

std::vector<double> ReferenceAnswerer::class_scores(const Embedding& img,
                                                    std::optional<std::size_t> context_class) const {
  auto s = cosines(img, *names_.embeddings);
  if (context_class) s[context_refers_[*context_class]] += context_weight_;
  return s;
}

Answer ReferenceAnswerer::answer(const Tensor& image, std::string_view prompt) const {
  const Embedding img = model::encode_image(*params_, image);
  const double temperature = params_->temperature;
  const auto& t = classes_.templates;

  const auto open_answer = [&](std::string_view rest) -> Answer {
    if (mode_ == AnswerMode::kCaptioning) {
      const auto s = cosines(img, *captions_.embeddings);
      return {captions_.texts[attacks::argmax(s)], top_two_margin(softmax(s, temperature))};
    }
    const auto s = class_scores(img, context_in(rest));
    return {classes_.classes[attacks::argmax(s)], top_two_margin(softmax(s, temperature))};
  };

  for (const auto* open : {&t.question, &t.caption}) {
    const std::string head = open->instantiate("");
    if (prompt.starts_with(head)) return open_answer(prompt.substr(head.size()));
  }

  const std::string probe = t.existence.instantiate("\x1f");
  const auto slot = probe.find('\x1f');
  const std::string_view prefix = std::string_view(probe).substr(0, slot);
  const std::string_view suffix = std::string_view(probe).substr(slot + 1);
  if (prompt.starts_with(prefix)) {
    const auto end = prompt.find(suffix, prefix.size());
    if (end != std::string_view::npos) {
      const auto filler = prompt.substr(prefix.size(), end - prefix.size());
      const auto rest = prompt.substr(end + suffix.size());
      if (const auto cls = find_text(classes_.classes, filler)) {
        return existence_answer(class_scores(img, context_in(rest)), *cls, temperature);
      }
      if (filler.ends_with(kColorSuffix)) {
        const auto color = filler.substr(0, filler.size() - kColorSuffix.size());
        if (const auto c = find_text(colors_.texts, color)) {
          return existence_answer(cosines(img, *colors_.embeddings), *c, temperature);
        }
      }
    }
  }
  if (prompt.starts_with(kPositionPrefix) && prompt.ends_with(kPositionSuffix)) {
    const auto pos = prompt.substr(kPositionPrefix.size(),
                                   prompt.size() - kPositionPrefix.size() - kPositionSuffix.size());
    if (const auto p = find_text(positions_.texts, pos)) {
      return existence_answer(cosines(img, *positions_.embeddings), *p, temperature);
    }
  }
  throw std::invalid_argument("answerer: unrecognized prompt: " + std::string(prompt));
}

std::size_t answer_to_class(std::string_view answer, const ClassificationTarget& target,
                            const data::Vocabulary& vocab, const data::PromptTemplate& templ) {
  const auto words = data::tokenize(answer);
  if (words.empty() || vocab.count_unknown(answer) == words.size()) return kMiss;
  const auto emb = model::encode_text(*target.params, vocab.encode(templ.instantiate(answer)));
  return attacks::argmax(cosines(emb, *target.bank.embeddings));
}

// ---------------------------------------------------------------------------
// Query decomposition

CandidateSet sample_candidates(std::size_t num_classes, std::size_t k, std::size_t gold,
                               std::uint64_t seed, std::string_view sample_id) {
  if (k < 2) throw std::invalid_argument("query decomposition: k must be at least 2");
  if (k > num_classes) {
    throw std::invalid_argument("query decomposition: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(num_classes) + " classes");
  }
  if (gold >= num_classes) throw std::out_of_range("query decomposition: gold class out of range");
  CandidateSet set;
  if (k == num_classes) {
    for (std::size_t i = 0; i < num_classes; ++i) set.indices.push_back(i);
    return set;
  }
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < num_classes; ++i)
    if (i != gold) others.push_back(i);
  Rng rng(derive_seed(seed, sample_id));
  shuffle(others.begin(), others.end(), rng);
  set.indices.assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1));
  set.indices.push_back(gold);
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

double yes_confidence(const Answer& a) {
  if (a.text == "yes") return a.confidence;
  if (a.text == "no") return 1.0 - a.confidence;
  return 0.0;
}

std::size_t query_decomposition_classify(const Answerer& answerer, const Tensor& image,
                                         const data::ClassVocab& classes,
                                         const CandidateSet& candidates) {
  if (candidates.indices.size() < 2) {
    throw std::invalid_argument("query decomposition: need at least 2 candidates");
  }
  std::size_t best = candidates.indices.front();
  double best_conf = -1.0;
  for (const auto c : candidates.indices) {
    const double conf = yes_confidence(answerer.answer(image, existence_prompt(classes, c, true)));
    if (conf > best_conf || (conf == best_conf && c < best)) {
      best_conf = conf;
      best = c;
    }
  }
  return best;
}

}  // namespace vlwb::tasks
