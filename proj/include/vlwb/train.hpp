#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vlwb/datagen.hpp"
#include "vlwb/model.hpp"
#include "vlwb/vocab.hpp"

namespace vlwb::model {

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch = 32;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = 0.0;  // fraction in [0, 1], class-prompt zero-shot
  double temperature = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochStats> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Symmetric in-batch contrastive loss between images and one of their
/// captions, minimized with plain SGD. A pure function of its arguments.
TrainResult contrastive_train(EncoderParams params, const data::Dataset& dataset,
                              const data::Vocabulary& vocab, const TrainConfig& config);

/// Mean of row-wise and column-wise cross entropy of temperature-scaled
/// image/text cosine similarities, with matching indices as targets.
diff::Var contrastive_loss(const BoundParams& p, diff::Var images,
                           const std::vector<std::vector<std::size_t>>& texts);

/// Zero-shot accuracy in [0, 1] with "a photo of <class>" prompts.
double prompt_accuracy(const EncoderParams& params, const data::Vocabulary& vocab,
                       const data::ClassVocab& classes, std::span<const data::ImageSample> samples);

}  // namespace vlwb::model
