#include "vlwb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vlwb/rng.hpp"

namespace vlwb::model {

using diff::Graph;
using diff::Var;

Var contrastive_loss(const BoundParams& p, Var images,
                     const std::vector<std::vector<std::size_t>>& texts) {
  const Var img = image_embeddings(p, images);
  const Var txt = text_embeddings(p, texts);
  const std::size_t n = texts.size();
  if (img.shape()[0] != n) {
    throw ShapeError("contrastive_loss: " + std::to_string(img.shape()[0]) + " images vs " +
                     std::to_string(n) + " texts");
  }
  const Var logits = diff::scale_by(diff::cosine_similarity(img, txt), p.temperature);
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  const Var rows = diff::softmax_cross_entropy(logits, labels);
  const Var cols = diff::softmax_cross_entropy(diff::transpose(logits), labels);
  return diff::scale(diff::add(rows, cols), 0.5);
}

double prompt_accuracy(const EncoderParams& params, const data::Vocabulary& vocab,
                       const data::ClassVocab& classes, std::span<const data::ImageSample> samples) {
  if (samples.empty()) return 0.0;
  std::vector<std::vector<std::size_t>> prompts;
  for (const auto& c : classes.classes) {
    prompts.push_back(vocab.encode(classes.templates.classification.instantiate(c)));
  }
  const Tensor bank = encode_texts(params, prompts);
  std::vector<Tensor> images;
  for (const auto& s : samples) images.push_back(s.image);
  const Tensor embs = encode_images(params, images);
  const std::size_t d = bank.dim(1), k = bank.dim(0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += embs[i * d + j] * bank[c * d + j];
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    hits += best == samples[i].class_index ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

TrainResult contrastive_train(EncoderParams params, const data::Dataset& dataset,
                              const data::Vocabulary& vocab, const TrainConfig& config) {
  if (config.batch < 2) throw std::invalid_argument("train: batch must be at least 2");
  if (!(config.lr >= 0.0)) throw std::invalid_argument("train: lr must be non-negative");
  params.validate();

  const auto train = dataset.train();
  const auto val = dataset.val();
  if (train.size() < 2) throw std::invalid_argument("train: need at least 2 training samples");
  const auto classes = data::build_class_contexts(dataset.spec.classes);
  const std::size_t px = params.config.pixels();
  for (const auto& s : train) check_image(params.config, s.image);

  std::vector<std::array<std::vector<std::size_t>, 5>> caption_tokens(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t c = 0; c < 5; ++c) caption_tokens[i][c] = vocab.encode(train[i].captions[c]);

  Rng rng(config.seed);
  TrainResult result;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const std::size_t n = end - start;
      std::vector<double> pixels;
      pixels.reserve(n * px);
      std::vector<std::vector<std::size_t>> texts;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        pixels.insert(pixels.end(), s.image.values().begin(), s.image.values().end());
        texts.push_back(caption_tokens[order[k]][rng.below(5)]);
      }

      Graph g;
      const auto bound = bind(g, params, true);
      const Var images = g.constant(Tensor({n, px}, std::move(pixels)));
      const Var loss = contrastive_loss(bound, images, texts);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged(step, "train: loss is not finite at step " + std::to_string(step));
      }
      g.backward(loss);

      const Var leaves[] = {bound.patch_w,     bound.patch_b,     bound.hidden1_w,
                            bound.hidden1_b,   bound.hidden2_w,   bound.hidden2_b,
                            bound.image_proj,  bound.token_table, bound.text_hidden_w,
                            bound.text_hidden_b, bound.text_proj};
      auto named = params.named_tensors();
      for (std::size_t i = 0; i < named.size(); ++i) {
        auto& w = *named[i].second;
        const auto& grad = g.grad(leaves[i]);
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= config.lr * grad[j];
      }
      params.temperature = std::clamp(params.temperature - config.lr * g.grad(bound.temperature)[0],
                                      kMinTemperature, kMaxTemperature);
      loss_sum += value;
      ++batches;
      ++step;
    }
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    stats.val_accuracy = prompt_accuracy(params, vocab, classes, val);
    stats.temperature = params.temperature;
    result.curve.push_back(stats);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace vlwb::model
