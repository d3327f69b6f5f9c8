#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vlwb/imageio.hpp"
#include "vlwb/model.hpp"
#include "vlwb/rng.hpp"
#include "vlwb/train.hpp"

using namespace vlwb;
using namespace vlwb::model;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.height = c.width = 16;
  c.patch = 8;
  c.patch_embed = 8;
  c.hidden = 8;
  c.embed_dim = 6;
  c.token_dim = 5;
  c.text_hidden = 7;
  return c;
}

Tensor random_image(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({c.height, c.width, c.channels});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("init_params is a pure function of its seed") {
  const auto a = init_params(tiny_config(), 10, 1);
  const auto b = init_params(tiny_config(), 10, 1);
  const auto c = init_params(tiny_config(), 10, 2);
  CHECK(bitwise_equal(a, b));
  CHECK_FALSE(bitwise_equal(a, c));
  CHECK(a.vocab_size() == 10);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("model config validation") {
  auto c = tiny_config();
  c.width = 20;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.init_temperature = 0.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("image and text embeddings are unit vectors") {
  const auto p = init_params(tiny_config(), 10, 3);
  const auto img = encode_image(p, random_image(p.config, 4));
  CHECK(norm(img.values()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(img.dim() == 6);
  const auto txt = encode_text(p, std::vector<std::size_t>{1, 2, 3});
  CHECK(norm(txt.values()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(Embedding({0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS(encode_text(p, std::vector<std::size_t>{}));
}

TEST_CASE("batch encoding agrees with single encoding") {
  const auto p = init_params(tiny_config(), 10, 5);
  const std::vector<Tensor> imgs{random_image(p.config, 1), random_image(p.config, 2)};
  const Tensor bank = encode_images(p, imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto single = encode_image(p, imgs[i]);
    const auto row = row_embedding(bank, i);
    for (std::size_t d = 0; d < single.dim(); ++d) {
      CHECK(row.values()[d] == doctest::Approx(single.values()[d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("similarity logits are temperature-scaled cosines") {
  const auto p = init_params(tiny_config(), 10, 6);
  const auto img = encode_image(p, random_image(p.config, 7));
  const std::vector<Embedding> texts{encode_text(p, std::vector<std::size_t>{1}),
                                     encode_text(p, std::vector<std::size_t>{2, 3})};
  const auto z = similarity_logits(img, texts, 12.5);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(z[i] == doctest::Approx(12.5 * img.dot(texts[i])));
}

TEST_CASE("images outside the pixel range or of the wrong shape are rejected") {
  const auto p = init_params(tiny_config(), 10, 8);
  auto img = random_image(p.config, 9);
  img[3] = 1.5;
  CHECK_THROWS_AS(encode_image(p, img), std::invalid_argument);
  CHECK_THROWS_AS(encode_image(p, Tensor({8, 8, 3})), ShapeError);
}

TEST_CASE("checkpoints round-trip bit for bit and reject corrupt files") {
  const auto dir = fs::temp_directory_path() / "vlwb-unit-ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = init_params(tiny_config(), 10, 10);
  p.temperature = 13.25;
  save_checkpoint(dir / "m.vlwb", p);
  const auto back = load_checkpoint(dir / "m.vlwb");
  CHECK(bitwise_equal(p, back));
  CHECK(back.config.embed_dim == 6);

  write_text_file(dir / "bad.vlwb", "XXXXgarbage");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.vlwb"), IoError);
  {
    const auto full = read_text_file(dir / "m.vlwb");
    write_text_file(dir / "short.vlwb", full.substr(0, full.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.vlwb"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.vlwb"), IoError);
  fs::remove_all(dir);
}
