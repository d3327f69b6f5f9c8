#include "vlwb/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "vlwb/imageio.hpp"
#include "vlwb/rng.hpp"

namespace vlwb::model {

using diff::Graph;
using diff::Var;

void ModelConfig::validate() const {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw std::invalid_argument("model: image size must be a multiple of the patch size");
  }
  if (channels == 0 || patch_embed == 0 || hidden == 0 || embed_dim == 0 || token_dim == 0 ||
      text_hidden == 0) {
    throw std::invalid_argument("model: all widths must be positive");
  }
  if (!(init_temperature >= kMinTemperature && init_temperature <= kMaxTemperature)) {
    throw std::invalid_argument("model: initial temperature must lie in [1, 100]");
  }
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_tensors() {
  return {{"image.patch_w", &patch_w},       {"image.patch_b", &patch_b},
          {"image.hidden1_w", &hidden1_w},   {"image.hidden1_b", &hidden1_b},
          {"image.hidden2_w", &hidden2_w},   {"image.hidden2_b", &hidden2_b},
          {"image.proj", &image_proj},       {"text.token_table", &token_table},
          {"text.hidden_w", &text_hidden_w}, {"text.hidden_b", &text_hidden_b},
          {"text.proj", &text_proj}};
}

std::vector<std::pair<std::string, const Tensor*>> EncoderParams::named_tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<EncoderParams*>(this)->named_tensors()) out.emplace_back(name, t);
  return out;
}

void EncoderParams::validate() const {
  config.validate();
  for (const auto& [name, t] : named_tensors()) {
    if (t->empty()) throw std::invalid_argument("params: tensor " + name + " is empty");
    if (!t->all_finite()) throw std::invalid_argument("params: tensor " + name + " is not finite");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("params: temperature must be positive");
  }
}

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = stddev * rng.normal();
  return t;
}

double fan_in_scale(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

std::vector<std::size_t> patch_index(const ModelConfig& c, std::size_t batch) {
  const std::size_t p = c.patch, per_row = c.width / p, np = c.patches();
  const std::size_t patch_len = p * p * c.channels;
  std::vector<std::size_t> idx;
  idx.reserve(batch * np * patch_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * c.pixels();
    for (std::size_t k = 0; k < np; ++k) {
      const std::size_t pr = k / per_row, pc = k % per_row;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < c.channels; ++ch)
            idx.push_back(base + ((pr * p + y) * c.width + pc * p + x) * c.channels + ch);
    }
  }
  return idx;
}

}  // namespace

EncoderParams init_params(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  if (vocab_size < 2) throw std::invalid_argument("init_params: vocabulary too small");
  Rng rng(seed);
  EncoderParams p;
  p.config = config;
  const std::size_t patch_len = config.patch * config.patch * config.channels;
  const std::size_t flat = config.patches() * config.patch_embed;
  p.patch_w = random_matrix(patch_len, config.patch_embed, fan_in_scale(patch_len), rng);
  p.patch_b = Tensor({config.patch_embed});
  p.hidden1_w = random_matrix(flat, config.hidden, fan_in_scale(flat), rng);
  p.hidden1_b = Tensor({config.hidden});
  p.hidden2_w = random_matrix(config.hidden, config.hidden, fan_in_scale(config.hidden), rng);
  p.hidden2_b = Tensor({config.hidden});
  p.image_proj = random_matrix(config.hidden, config.embed_dim, fan_in_scale(config.hidden), rng);
  p.token_table = random_matrix(vocab_size, config.token_dim, 1.0, rng);
  p.text_hidden_w =
      random_matrix(config.token_dim, config.text_hidden, fan_in_scale(config.token_dim), rng);
  p.text_hidden_b = Tensor({config.text_hidden});
  p.text_proj =
      random_matrix(config.text_hidden, config.embed_dim, fan_in_scale(config.text_hidden), rng);
  p.temperature = config.init_temperature;
  return p;
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  double ss = 0.0;
  for (double v : values_) ss += v * v;
  if (values_.empty() || std::abs(std::sqrt(ss) - 1.0) > kNormTolerance) {
    throw std::invalid_argument("embedding: norm " + std::to_string(std::sqrt(ss)) +
                                " is not 1");
  }
}

double Embedding::dot(const Embedding& other) const {
  if (other.dim() != dim()) throw ShapeError("embedding: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * other.values_[i];
  return s;
}

Tensor stack(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("stack: no embeddings");
  const std::size_t d = embeddings.front().dim();
  std::vector<double> data;
  data.reserve(embeddings.size() * d);
  for (const auto& e : embeddings) {
    if (e.dim() != d) throw ShapeError("stack: mixed embedding dimensions");
    data.insert(data.end(), e.values().begin(), e.values().end());
  }
  return Tensor({embeddings.size(), d}, std::move(data));
}

Embedding row_embedding(const Tensor& bank, std::size_t row) {
  const std::size_t d = bank.dim(1);
  const auto* first = bank.values().data() + row * d;
  return Embedding(std::vector<double>(first, first + d));
}

BoundParams bind(Graph& g, const EncoderParams& params, bool trainable) {
  BoundParams b;
  b.config = params.config;
  b.patch_w = g.leaf(params.patch_w, trainable);
  b.patch_b = g.leaf(params.patch_b, trainable);
  b.hidden1_w = g.leaf(params.hidden1_w, trainable);
  b.hidden1_b = g.leaf(params.hidden1_b, trainable);
  b.hidden2_w = g.leaf(params.hidden2_w, trainable);
  b.hidden2_b = g.leaf(params.hidden2_b, trainable);
  b.image_proj = g.leaf(params.image_proj, trainable);
  b.token_table = g.leaf(params.token_table, trainable);
  b.text_hidden_w = g.leaf(params.text_hidden_w, trainable);
  b.text_hidden_b = g.leaf(params.text_hidden_b, trainable);
  b.text_proj = g.leaf(params.text_proj, trainable);
  b.temperature = g.leaf(Tensor::scalar(params.temperature), trainable);
  return b;
}

Var image_embeddings(const BoundParams& p, Var images) {
  const auto& c = p.config;
  const std::size_t total = images.value().size();
  if (total % c.pixels() != 0 ||
      (images.value().rank() == 3 &&
       images.shape() != Shape{c.height, c.width, c.channels})) {
    throw ShapeError("image_embeddings: expected [B," + std::to_string(c.pixels()) + "] or [" +
                     std::to_string(c.height) + "," + std::to_string(c.width) + "," +
                     std::to_string(c.channels) + "], got " + to_string(images.shape()));
  }
  const std::size_t batch = total / c.pixels();
  const std::size_t patch_len = c.patch * c.patch * c.channels;
  Var patches = diff::gather(images, patch_index(c, batch), {batch * c.patches(), patch_len});
  Var tokens = diff::add_row(diff::matmul(patches, p.patch_w), p.patch_b);
  Var flat = diff::reshape(tokens, {batch, c.patches() * c.patch_embed});
  Var h1 = diff::tanh(diff::add_row(diff::matmul(flat, p.hidden1_w), p.hidden1_b));
  Var h2 = diff::tanh(diff::add_row(diff::matmul(h1, p.hidden2_w), p.hidden2_b));
  return diff::l2_normalize(diff::matmul(h2, p.image_proj));
}

Var text_embeddings(const BoundParams& p, const std::vector<std::vector<std::size_t>>& bags) {
  for (const auto& bag : bags) {
    if (bag.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  }
  Var pooled = diff::embedding_bag_mean(p.token_table, bags);
  Var h = diff::tanh(diff::add_row(diff::matmul(pooled, p.text_hidden_w), p.text_hidden_b));
  return diff::l2_normalize(diff::matmul(h, p.text_proj));
}

void check_image(const ModelConfig& config, const Tensor& image) {
  const Shape expected{config.height, config.width, config.channels};
  if (image.shape() != expected) {
    throw ShapeError("encode_image: expected " + to_string(expected) + ", got " +
                     to_string(image.shape()));
  }
  for (double v : image.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("encode_image: pixel value " + std::to_string(v) +
                                  " outside [0, 1]");
    }
  }
}

Embedding encode_image(const EncoderParams& params, const Tensor& image) {
  check_image(params.config, image);
  Graph g;
  const auto bound = bind(g, params, false);
  const Var e = image_embeddings(bound, g.constant(image));
  return Embedding(e.value().storage());
}

Tensor encode_images(const EncoderParams& params, std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("encode_images: no images");
  const std::size_t px = params.config.pixels();
  std::vector<double> flat;
  flat.reserve(images.size() * px);
  for (const auto& img : images) {
    check_image(params.config, img);
    flat.insert(flat.end(), img.values().begin(), img.values().end());
  }
  Graph g;
  const auto bound = bind(g, params, false);
  return image_embeddings(bound, g.constant(Tensor({images.size(), px}, std::move(flat)))).value();
}

Embedding encode_text(const EncoderParams& params, std::span<const std::size_t> tokens) {
  const auto bank = encode_texts(params, {std::vector<std::size_t>(tokens.begin(), tokens.end())});
  return Embedding(bank.storage());
}

Tensor encode_texts(const EncoderParams& params, const std::vector<std::vector<std::size_t>>& bags) {
  if (bags.empty()) throw std::invalid_argument("encode_texts: no texts");
  Graph g;
  const auto bound = bind(g, params, false);
  return text_embeddings(bound, bags).value();
}

std::vector<double> similarity_logits(const Embedding& image, std::span<const Embedding> texts,
                                      double temperature) {
  if (texts.empty()) throw std::invalid_argument("similarity_logits: no text embeddings");
  std::vector<double> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(temperature * image.dot(t));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'L', 'W', 'B'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& buf, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::filesystem::path& path;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError("truncated checkpoint: " + path.string());
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

void put_tensor(std::string& buf, const std::string& name, const Tensor& t) {
  put_u32(buf, static_cast<std::uint32_t>(name.size()));
  buf += name;
  put_u32(buf, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
  for (double v : t.values()) put_f64(buf, v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  params.validate();
  std::string buf(kCheckpointMagic, 4);
  put_u32(buf, kCheckpointVersion);
  const auto& c = params.config;
  put_tensor(buf, "meta.config",
             Tensor::vector({static_cast<double>(c.height), static_cast<double>(c.width),
                             static_cast<double>(c.channels), static_cast<double>(c.patch),
                             static_cast<double>(c.patch_embed), static_cast<double>(c.hidden),
                             static_cast<double>(c.embed_dim), static_cast<double>(c.token_dim),
                             static_cast<double>(c.text_hidden), c.init_temperature}));
  for (const auto& [name, t] : params.named_tensors()) put_tensor(buf, name, *t);
  put_tensor(buf, "temperature", Tensor::scalar(params.temperature));
  write_text_file(path, buf);
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  const std::string buf = read_text_file(path);
  if (buf.size() < 8 || buf.compare(0, 4, kCheckpointMagic, 4) != 0) {
    throw IoError("not a VLWB checkpoint: " + path.string());
  }
  Reader r{buf, 4, path};
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, Tensor> tensors;
  while (r.pos < buf.size()) {
    const auto len = r.u32();
    r.need(len);
    std::string name = buf.substr(r.pos, len);
    r.pos += len;
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(element_count(shape));
    for (auto& v : data) v = r.f64();
    tensors.insert_or_assign(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  auto take = [&](const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint missing tensor " + name);
    return it->second;
  };
  EncoderParams p;
  const auto meta = take("meta.config");
  if (meta.size() != 10) throw IoError("checkpoint has malformed meta.config");
  auto& c = p.config;
  c.height = static_cast<std::size_t>(meta[0]);
  c.width = static_cast<std::size_t>(meta[1]);
  c.channels = static_cast<std::size_t>(meta[2]);
  c.patch = static_cast<std::size_t>(meta[3]);
  c.patch_embed = static_cast<std::size_t>(meta[4]);
  c.hidden = static_cast<std::size_t>(meta[5]);
  c.embed_dim = static_cast<std::size_t>(meta[6]);
  c.token_dim = static_cast<std::size_t>(meta[7]);
  c.text_hidden = static_cast<std::size_t>(meta[8]);
  c.init_temperature = meta[9];
  for (auto& [name, t] : p.named_tensors()) *t = take(name);
  p.temperature = take("temperature").item();
  p.validate();
  return p;
}

bool bitwise_equal(const EncoderParams& a, const EncoderParams& b) {
  const auto na = a.named_tensors();
  const auto nb = b.named_tensors();
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (!vlwb::bitwise_equal(*na[i].second, *nb[i].second)) return false;
  }
  return std::memcmp(&a.temperature, &b.temperature, sizeof(double)) == 0;
}

}  // namespace vlwb::model
