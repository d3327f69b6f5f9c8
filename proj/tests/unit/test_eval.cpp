#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>

#include "vlwb/eval.hpp"
#include "vlwb/imageio.hpp"
#include "vlwb/rng.hpp"

using namespace vlwb;
using namespace vlwb::eval;
namespace fs = std::filesystem;

namespace {

struct Setup {
  data::Dataset ds;
  data::Vocabulary vocab;
  data::ClassVocab classes;
  tasks::ParamsPtr params;
  std::vector<data::ImageSample> val;

  Setup() {
    data::SyntheticSpec spec;
    spec.per_class = 10;
    spec.seed = 21;
    ds = data::generate_samples(spec);
    vocab = data::build_vocabulary(spec);
    classes = data::build_class_contexts(spec.classes);
    params = std::make_shared<const model::EncoderParams>(
        model::init_params({}, vocab.size(), 22));
    val = ds.val();
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

// Reads the gold class back from a marker in the first pixel.
class MarkerAnswerer : public tasks::Answerer {
 public:
  explicit MarkerAnswerer(const data::ClassVocab& c) : classes_(c) {}
  tasks::Answer answer(const Tensor& image, std::string_view) const override {
    return {classes_.classes[static_cast<std::size_t>(std::lround(image[0] * 10))], 1.0};
  }

 private:
  const data::ClassVocab& classes_;
};

std::vector<Tensor> images_of(std::span<const data::ImageSample> s) {
  std::vector<Tensor> out;
  for (const auto& x : s) out.push_back(x.image);
  return out;
}

}  // namespace

TEST_CASE("percent change rounds to signed integers") {
  CHECK(display_change(percent_change(63.32, 11.78)) == "-81");
  CHECK(display_change(percent_change(36.58, 32.96)) == "-10");
  CHECK(*percent_change(36.58, 32.96) == doctest::Approx(-9.896118));
  CHECK(display_change(percent_change(50.0, 50.0)) == "0");
  CHECK(display_change(percent_change(50.0, 52.0)) == "+4");
  // Half away from zero.
  CHECK(display_change(percent_change(200.0, 199.0)) == "-1");
  CHECK(display_change(percent_change(100.0, 99.5)) == "-1");
  CHECK(display_change(percent_change(100.0, 100.5)) == "+1");
  CHECK_FALSE(percent_change(0.0, 10.0).has_value());
  CHECK_FALSE(percent_change(10.0, std::nan("")).has_value());
  CHECK(display_change(std::nullopt) == "n/a");
}

TEST_CASE("metric rows recompute their annotations from pre and post") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double pre = rng.uniform(0.0, 100.0), n = rng.uniform(0.0, 100.0);
    const auto row = MetricRow::make("m", "t", "pgd", pre, n, std::nan(""));
    CHECK(display_change(row.change_normal) == display_change(percent_change(pre, n)));
    CHECK_FALSE(row.change_strong.has_value());
  }
}

TEST_CASE("breakdown groups, sorts by drop and notes empty groups") {
  const std::vector<std::string> keys{"what", "is", "what", "is", "where"};
  const std::vector<bool> pre{true, true, true, true, true};
  const std::vector<bool> post{false, true, false, false, true};
  const std::vector<std::string> expected{"what", "is", "where", "how"};
  const auto b = breakdown_by("t", keys, pre, post, expected);
  REQUIRE(b.rows.size() == 3);
  CHECK(b.rows[0].key == "what");
  CHECK(b.rows[0].drop == doctest::Approx(100.0));
  CHECK(b.rows[1].key == "is");
  CHECK(b.rows[1].count == 2);
  CHECK(b.rows[1].post == doctest::Approx(50.0));
  CHECK(b.rows[2].key == "where");
  REQUIRE(b.notes.size() == 1);
  CHECK(b.notes[0].find("how") != std::string::npos);

  const std::vector<std::string> one(4, "Only Group?");
  const auto single = breakdown_by("t", one, {true, true, false, true}, {true, false, false, false});
  REQUIRE(single.rows.size() == 1);
  CHECK(single.rows[0].key == "Only Group?");
  CHECK(single.rows[0].pre == doctest::Approx(75.0));
  CHECK(single.rows[0].post == doctest::Approx(25.0));
  CHECK_THROWS_AS(breakdown_by("t", one, {true}, {true}), std::invalid_argument);
}

TEST_CASE("classification accuracy: perfect, constant and permuted scorers") {
  const auto& s = setup();
  // One representative image per class; its own embedding is the class text.
  std::vector<Tensor> reps;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 8; ++c) {
    reps.push_back(s.ds.samples[c * 10].image);
    labels.push_back(c);
  }
  tasks::ClassificationTarget perfect{s.params, {}};
  perfect.bank.texts.resize(8);
  perfect.bank.embeddings = std::make_shared<const Tensor>(model::encode_images(*s.params, reps));
  CHECK(eval_classification(perfect, reps, labels) == doctest::Approx(100.0));

  tasks::ClassificationTarget constant{s.params, {}};
  constant.bank.texts.resize(8);
  std::vector<model::Embedding> same(8, model::row_embedding(*perfect.bank.embeddings, 0));
  constant.bank.embeddings = std::make_shared<const Tensor>(model::stack(same));
  CHECK(eval_classification(constant, reps, labels) == doctest::Approx(12.5));

  const auto target = tasks::build_classification_logits(s.params, s.vocab, s.classes,
                                                         s.classes.templates.classification);
  auto imgs = images_of(s.val);
  std::vector<std::size_t> ys;
  for (const auto& x : s.val) ys.push_back(x.class_index);
  const double acc = eval_classification(target, imgs, ys, 1);
  CHECK(eval_classification(target, imgs, ys, 4) == acc);
  std::reverse(imgs.begin(), imgs.end());
  std::reverse(ys.begin(), ys.end());
  CHECK(eval_classification(target, imgs, ys) == acc);
  CHECK_THROWS(eval_classification(target, {}, {}));
}

TEST_CASE("an oracle answerer scores 100 percent") {
  const auto& s = setup();
  auto imgs = images_of(s.val);
  for (std::size_t i = 0; i < imgs.size(); ++i) imgs[i][0] = s.val[i].class_index / 10.0;
  const auto target = tasks::build_classification_logits(s.params, s.vocab, s.classes,
                                                         s.classes.templates.classification);
  const AnswerContext ctx{s.params.get(), &s.vocab, &s.classes, &target, nullptr};
  const MarkerAnswerer oracle(s.classes);
  CHECK(eval_answerer(oracle, s.val, imgs, AnswerTask::kClassification, false, ctx) ==
        doctest::Approx(100.0));
  CHECK(eval_answerer(oracle, s.val, imgs, AnswerTask::kClassification, true, ctx, 3) ==
        doctest::Approx(100.0));
}

TEST_CASE("recall@1 matches caption text and needs two gallery images") {
  const auto& s = setup();
  const auto gallery = build_caption_gallery(*s.params, s.vocab, s.val);
  CHECK(gallery.texts.size() == 5 * s.val.size());
  CHECK(gallery.owner[7] == 1);
  CHECK(gallery.matches(5, s.val[1]));
  const auto imgs = images_of(s.val);
  const double r1 = eval_retrieval_recall1(*s.params, gallery, s.val, imgs, 1);
  CHECK((r1 >= 0.0 && r1 <= 100.0));
  CHECK(eval_retrieval_recall1(*s.params, gallery, s.val, imgs, 4) == r1);
  CHECK_THROWS_AS(build_caption_gallery(*s.params, s.vocab, std::span(s.val).first(1)),
                  std::invalid_argument);
}

TEST_CASE("reports render every row and write three files") {
  EvalReport r;
  r.seed = 42;
  r.gallery_images = 160;
  r.rows.push_back(MetricRow::make("visual encoder", "classification", "pgd", 63.32, 11.78, 0.5));
  r.rows.push_back(MetricRow::make("answerer, v2", "classification", "cw", 36.58, 32.96,
                                   std::nan("")));
  r.breakdowns.push_back(breakdown_by("drops", std::vector<std::string>{"a", "b"}, {true, true},
                                      {false, true}));
  r.config_echo = "seed = 42\n";
  const auto csv = render_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(csv.find("\"answerer, v2\"") != std::string::npos);
  CHECK(csv.find("63.32") != std::string::npos);
  const auto md = render_markdown(r);
  CHECK(md.find("11.78 (-81)") != std::string::npos);
  CHECK(md.find("32.96 (-10)") != std::string::npos);
  CHECK(md.find("Pre | Post_N | Post_S") != std::string::npos);
  CHECK(md.find("seed = 42") != std::string::npos);
  const auto svg = render_svg(r.breakdowns[0]);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find(">a<") != std::string::npos);

  const auto dir = fs::temp_directory_path() / "vlwb-unit-report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_report(dir, r);
  CHECK(read_text_file(dir / "report.csv") == csv);
  CHECK(fs::exists(dir / "report.md"));
  CHECK(fs::exists(dir / "breakdown.svg"));
  fs::remove_all(dir);
}
