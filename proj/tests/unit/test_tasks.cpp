#include <doctest.h>

#include <memory>
#include <set>

#include "vlwb/tasks.hpp"
#include "vlwb/train.hpp"

using namespace vlwb;
using namespace vlwb::tasks;

namespace {

// A small trained victim shared by the tests below.
struct Fixture {
  data::Dataset ds;
  data::Vocabulary vocab;
  data::ClassVocab classes;
  ParamsPtr params;
  std::vector<double> losses;

  Fixture() {
    data::SyntheticSpec spec;
    spec.classes = {"circle", "square", "bar"};
    spec.per_class = 20;
    spec.seed = 11;
    ds = data::generate_samples(spec);
    vocab = data::build_vocabulary(spec);
    classes = data::build_class_contexts(spec.classes);
    model::TrainConfig tc;
    tc.epochs = 8;
    tc.batch = 16;
    tc.seed = 12;
    auto r = model::contrastive_train(model::init_params({}, vocab.size(), 13), ds, vocab, tc);
    for (const auto& e : r.curve) losses.push_back(e.mean_loss);
    params = std::make_shared<const model::EncoderParams>(std::move(r.params));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Knows the true class of each image from its id.
class OracleAnswerer : public Answerer {
 public:
  OracleAnswerer(const data::ClassVocab& classes, std::size_t gold) : classes_(classes), gold_(gold) {}
  Answer answer(const Tensor&, std::string_view prompt) const override {
    const bool asks_gold = prompt.find(classes_.classes[gold_]) != std::string_view::npos;
    return {asks_gold ? "yes" : "no", 0.9};
  }

 private:
  const data::ClassVocab& classes_;
  std::size_t gold_;
};

}  // namespace

TEST_CASE("contrastive training is deterministic and lowers the loss") {
  const auto& f = fixture();
  REQUIRE(f.losses.size() == 8);
  CHECK(f.losses.back() < f.losses.front());
  CHECK(f.params->temperature >= model::kMinTemperature);
  CHECK(f.params->temperature <= model::kMaxTemperature);
  model::TrainConfig tc;
  tc.epochs = 2;
  tc.batch = 16;
  tc.seed = 12;
  const auto init = model::init_params({}, f.vocab.size(), 13);
  const auto a = model::contrastive_train(init, f.ds, f.vocab, tc);
  const auto b = model::contrastive_train(init, f.ds, f.vocab, tc);
  CHECK(model::bitwise_equal(a.params, b.params));
}

TEST_CASE("classification scorer graph matches its forward logits") {
  const auto& f = fixture();
  const auto target = build_classification_logits(f.params, f.vocab, f.classes,
                                                  f.classes.templates.classification);
  REQUIRE(target.bank.size() == 3);
  CHECK(target.bank.texts[1] == "a photo of square");
  const auto& img = f.ds.samples[0].image;
  const auto direct = target.logits(img);
  const auto graph = target.scorer(0).logits(img);
  REQUIRE(direct.size() == graph.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct[i] == doctest::Approx(graph[i]));
  CHECK_THROWS_AS(embed_texts(*f.params, f.vocab, {"a photo of hexagon"}), std::invalid_argument);
}

TEST_CASE("caption targets are unit means and reject unknown-only captions") {
  const auto& f = fixture();
  const auto e = build_caption_target(*f.params, f.vocab, f.ds.samples[0]);
  double n = 0.0;
  for (double v : e.values()) n += v * v;
  CHECK(n == doctest::Approx(1.0));
  const std::vector<std::string> junk{"zzz qqq"};
  CHECK_THROWS(caption_mean(*f.params, f.vocab, junk));
}

TEST_CASE("synthetic attack captions read color, shape and position") {
  const auto& f = fixture();
  const auto& s = f.ds.samples[0];
  const auto c = synth_caption_for_attack(s, f.ds.spec.classes);
  CHECK(c == "a " + s.attributes.color + " " + f.ds.spec.classes[s.class_index] + " in the " +
                 s.attributes.position);
  const auto vals = f.ds.val();
  const auto target = build_synthetic_target(f.params, f.vocab, vals, f.ds.spec.classes);
  CHECK(target.size() == vals.size());
  CHECK(target.scorer(2).label == 2);
}

TEST_CASE("candidate sets contain the gold class and are reproducible") {
  for (std::size_t gold = 0; gold < 8; ++gold) {
    const auto a = sample_candidates(8, 4, gold, 99, "img-" + std::to_string(gold));
    const auto b = sample_candidates(8, 4, gold, 99, "img-" + std::to_string(gold));
    CHECK(a.indices == b.indices);
    CHECK(a.indices.size() == 4);
    CHECK(std::set<std::size_t>(a.indices.begin(), a.indices.end()).size() == 4);
    CHECK(std::is_sorted(a.indices.begin(), a.indices.end()));
    CHECK(std::find(a.indices.begin(), a.indices.end(), gold) != a.indices.end());
  }
  CHECK(sample_candidates(5, 5, 2, 1, "x").indices == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(sample_candidates(5, 1, 0, 1, "x"), std::invalid_argument);
  CHECK_THROWS_AS(sample_candidates(5, 6, 0, 1, "x"), std::invalid_argument);
}

TEST_CASE("query decomposition with an oracle answerer picks the gold class") {
  const auto& f = fixture();
  for (std::size_t gold = 0; gold < 3; ++gold) {
    const OracleAnswerer oracle(f.classes, gold);
    CHECK(query_decomposition_classify(oracle, f.ds.samples[0].image, f.classes,
                                       sample_candidates(3, 3, gold, 1, "s")) == gold);
  }
  CHECK(yes_confidence({"yes", 0.8}) == doctest::Approx(0.8));
  CHECK(yes_confidence({"no", 0.8}) == doctest::Approx(0.2));
  CHECK(yes_confidence({"maybe", 0.8}) == 0.0);
}

TEST_CASE("reference answerer: answers, confidences and the context effect") {
  const auto& f = fixture();
  const ReferenceAnswerer plain(f.params, f.vocab, f.classes, f.ds.spec.colors,
                                AnswerMode::kClassification, 1.0);
  const ReferenceAnswerer heavy(f.params, f.vocab, f.classes, f.ds.spec.colors,
                                AnswerMode::kClassification, 50.0);
  const ReferenceAnswerer none(f.params, f.vocab, f.classes, f.ds.spec.colors,
                               AnswerMode::kClassification, 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& img = f.ds.samples[i * 6].image;
    const auto base = plain.answer(img, question_prompt(f.classes, 0, false));
    CHECK(std::find(f.classes.classes.begin(), f.classes.classes.end(), base.text) !=
          f.classes.classes.end());
    CHECK((base.confidence >= 0.0 && base.confidence <= 1.0));
    for (std::size_t c = 0; c < 3; ++c) {
      // An overwhelming context decides the answer; a zero-weight one is inert.
      CHECK(heavy.answer(img, question_prompt(f.classes, c, true)).text == f.classes.classes[c]);
      CHECK(none.answer(img, question_prompt(f.classes, c, true)).text == base.text);
      const auto ex = plain.answer(img, existence_prompt(f.classes, c, false));
      CHECK((ex.text == "yes" || ex.text == "no"));
      CHECK((ex.confidence >= 0.0 && ex.confidence <= 1.0));
      CHECK(ex.text == (c == f.classes.index_of(base.text) ? "yes" : "no"));
    }
    // With every class as a candidate QD reproduces the plain answer.
    CHECK(f.classes.classes[query_decomposition_classify(
              plain, img, f.classes, sample_candidates(3, 3, 0, 1, "s"))] == base.text);
  }
}

TEST_CASE("captioning mode answers with a known caption") {
  const auto& f = fixture();
  const ReferenceAnswerer cap(f.params, f.vocab, f.classes, f.ds.spec.colors,
                              AnswerMode::kCaptioning);
  const auto a = cap.answer(f.ds.samples[0].image, caption_prompt(f.classes));
  const auto& texts = cap.caption_bank().texts;
  CHECK(std::find(texts.begin(), texts.end(), a.text) != texts.end());
  CHECK(f.vocab.count_unknown(a.text) == 0);
}

TEST_CASE("answer_to_class maps names and misses unknown words") {
  const auto& f = fixture();
  const auto target = build_classification_logits(f.params, f.vocab, f.classes,
                                                  f.classes.templates.classification);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(answer_to_class(f.classes.classes[c], target, f.vocab,
                          f.classes.templates.classification) == c);
  }
  CHECK(answer_to_class("zebra", target, f.vocab, f.classes.templates.classification) == kMiss);
  CHECK(answer_to_class("", target, f.vocab, f.classes.templates.classification) == kMiss);
}
