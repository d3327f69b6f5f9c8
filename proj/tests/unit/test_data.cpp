#include <doctest.h>

#include <filesystem>
#include <set>

#include "vlwb/datagen.hpp"
#include "vlwb/imageio.hpp"
#include "vlwb/rng.hpp"
#include "vlwb/vocab.hpp"

using namespace vlwb;
using namespace vlwb::data;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.classes = {"circle", "square", "triangle"};
  s.per_class = 10;
  s.seed = 7;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vlwb-unit-" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("tokenize lower-cases and splits on non-alphanumerics") {
  CHECK(tokenize("A Red-circle, 2x!") == std::vector<std::string>{"a", "red", "circle", "2x"});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("vocabulary is sorted, de-duplicated and reserves id 0") {
  const Vocabulary v({"red", "circle", "red", "a"});
  CHECK(v.size() == 4);
  CHECK(v.word(0) == Vocabulary::kUnkWord);
  CHECK(v.words()[1] == "a");
  CHECK(v.id("circle") == 2);
  CHECK(v.id("blue") == Vocabulary::kUnk);
  CHECK(v.encode("A red blue circle") == std::vector<std::size_t>{1, 3, 0, 2});
  CHECK(v.count_unknown("a blue green circle") == 2);
}

TEST_CASE("prompt templates need exactly one placeholder") {
  CHECK(PromptTemplate("a photo of {}").instantiate("dot") == "a photo of dot");
  CHECK_THROWS_AS(PromptTemplate("no slot"), std::invalid_argument);
  CHECK_THROWS_AS(PromptTemplate("{} and {}"), std::invalid_argument);
}

TEST_CASE("class contexts name their class and unknown classes are rejected") {
  const auto cv = build_class_contexts({"circle", "ring"});
  REQUIRE(cv.size() == 2);
  CHECK(cv.context(0).find("circle") != std::string::npos);
  CHECK(cv.index_of("ring") == 1);
  CHECK_THROWS_AS(cv.index_of("hexagon"), std::invalid_argument);
  CHECK_THROWS_AS(build_class_contexts({"hexagon"}), std::invalid_argument);
}

TEST_CASE("spec validation rejects bad specs") {
  auto s = small_spec();
  s.per_class = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.classes = {"circle", "circle"};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.noise_std = -0.1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.colors = {"mauve"};
  CHECK_THROWS(s.validate());
}

TEST_CASE("generated samples have the requested counts, split and content") {
  const auto spec = small_spec();
  const auto ds = generate_samples(spec);
  REQUIRE(ds.samples.size() == 30);
  CHECK(ds.val().size() == 6);  // 20% of each class
  CHECK(ds.train().size() == 24);
  const auto vocab = build_vocabulary(spec);
  std::set<std::string> ids;
  for (const auto& s : ds.samples) {
    ids.insert(s.id);
    CHECK(s.image.shape() == Shape{32, 32, 3});
    for (double v : s.image.values()) REQUIRE((v >= 0.0 && v <= 1.0));
    for (const auto& c : s.captions) {
      CHECK(vocab.count_unknown(c) == 0);
      CHECK(c.find(spec.classes[s.class_index]) != std::string::npos);
    }
    CHECK(std::set<std::string>(s.captions.begin(), s.captions.end()).size() == 5);
  }
  CHECK(ids.size() == 30);
}

TEST_CASE("generation is deterministic in the seed and independent of parallelism") {
  const auto spec = small_spec();
  const auto a = generate_samples(spec, 1);
  const auto b = generate_samples(spec, 4);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(bitwise_equal(a.samples[i].image, b.samples[i].image));
    CHECK(a.samples[i].captions == b.samples[i].captions);
    CHECK(a.samples[i].split == b.samples[i].split);
  }
  auto other = spec;
  other.seed = 8;
  CHECK_FALSE(bitwise_equal(generate_samples(other).samples[0].image, a.samples[0].image));
}

TEST_CASE("datasets round-trip through disk and refuse silent overwrite") {
  const auto dir = fresh_dir("data");
  const auto ds = generate_dataset(small_spec(), dir, false);
  const auto back = load_dataset(dir);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(bitwise_equal(back.samples[i].image, round_to_f32(ds.samples[i].image)));
    CHECK(back.samples[i].captions == ds.samples[i].captions);
    CHECK(back.samples[i].attributes.color == ds.samples[i].attributes.color);
  }
  CHECK(back.spec.seed == 7);
  CHECK_THROWS_AS(generate_dataset(small_spec(), dir, false), IoError);
  CHECK_NOTHROW(generate_dataset(small_spec(), dir, true));
  CHECK_THROWS_AS(load_dataset(dir / "nope"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("imgf32 files round-trip at float precision and reject garbage") {
  const auto dir = fresh_dir("img");
  fs::create_directories(dir);
  Rng rng(3);
  Tensor img({4, 5, 3});
  for (double& v : img.values()) v = rng.uniform();
  write_imgf32(dir / "a.imgf32", img);
  CHECK(bitwise_equal(read_imgf32(dir / "a.imgf32"), round_to_f32(img)));
  write_text_file(dir / "b.imgf32", "not an image");
  CHECK_THROWS_AS(read_imgf32(dir / "b.imgf32"), IoError);
  CHECK_THROWS_AS(read_imgf32(dir / "missing.imgf32"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("seed derivation is domain separated") {
  CHECK(derive_seed(42, "data") != derive_seed(42, "train"));
  CHECK(derive_seed(42, "data") != derive_seed(43, "data"));
  CHECK(derive_seed(42, "data") == derive_seed(42, "data"));
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.below(7);
    CHECK(v < 7);
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
}
