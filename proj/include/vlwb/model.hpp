#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlwb/diff.hpp"
#include "vlwb/tensor.hpp"

namespace vlwb::model {

struct ModelConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::size_t patch = 8;
  std::size_t patch_embed = 128;
  std::size_t hidden = 64;
  std::size_t embed_dim = 32;
  std::size_t token_dim = 32;
  std::size_t text_hidden = 64;
  double init_temperature = 10.0;

  std::size_t patches() const { return (height / patch) * (width / patch); }
  std::size_t pixels() const { return height * width * channels; }
  void validate() const;
};

inline constexpr double kMinTemperature = 1.0;
inline constexpr double kMaxTemperature = 100.0;

/// Weights of the image and text towers plus the shared temperature.
struct EncoderParams {
  ModelConfig config;
  // image tower
  Tensor patch_w, patch_b;      // [P*P*C, pe], [pe]
  Tensor hidden1_w, hidden1_b;  // [patches*pe, hidden], [hidden]
  Tensor hidden2_w, hidden2_b;  // [hidden, hidden], [hidden]
  Tensor image_proj;            // [hidden, embed]
  // text tower
  Tensor token_table;                   // [vocab, token_dim]
  Tensor text_hidden_w, text_hidden_b;  // [token_dim, text_hidden], [text_hidden]
  Tensor text_proj;                     // [text_hidden, embed]
  double temperature = 10.0;

  std::size_t vocab_size() const { return token_table.dim(0); }

  /// Stable (name, tensor) listing used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  void validate() const;
};

EncoderParams init_params(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);

/// Unit-norm embedding vector.
class Embedding {
 public:
  static constexpr double kNormTolerance = 1e-9;

  /// Throws std::invalid_argument if the norm is not 1 within tolerance.
  explicit Embedding(std::vector<double> values);
  std::span<const double> values() const noexcept { return values_; }
  std::size_t dim() const noexcept { return values_.size(); }
  double dot(const Embedding& other) const;

 private:
  std::vector<double> values_;
};

/// Rows are unit embeddings; shape [n, embed_dim].
Tensor stack(std::span<const Embedding> embeddings);
Embedding row_embedding(const Tensor& bank, std::size_t row);

/// Parameters placed on a graph, either as trainable leaves or constants.
struct BoundParams {
  ModelConfig config;
  diff::Var patch_w, patch_b, hidden1_w, hidden1_b, hidden2_w, hidden2_b, image_proj;
  diff::Var token_table, text_hidden_w, text_hidden_b, text_proj;
  diff::Var temperature;
};

BoundParams bind(diff::Graph& graph, const EncoderParams& params, bool trainable);

/// images: [B, H*W*C] or a single [H, W, C] image. Returns [B, embed] unit rows.
diff::Var image_embeddings(const BoundParams& p, diff::Var images);
/// Mean-pooled bag of tokens per text. Returns [N, embed] unit rows.
diff::Var text_embeddings(const BoundParams& p, const std::vector<std::vector<std::size_t>>& bags);

/// Checks H x W x C shape and that every pixel lies in [0, 1].
void check_image(const ModelConfig& config, const Tensor& image);

Embedding encode_image(const EncoderParams& params, const Tensor& image);
/// Encodes many images in one pass; rows of the result are unit embeddings.
Tensor encode_images(const EncoderParams& params, std::span<const Tensor> images);
Embedding encode_text(const EncoderParams& params, std::span<const std::size_t> tokens);
Tensor encode_texts(const EncoderParams& params, const std::vector<std::vector<std::size_t>>& bags);

/// logit_i = temperature * cos(image, text_i).
std::vector<double> similarity_logits(const Embedding& image, std::span<const Embedding> texts,
                                      double temperature);

/// Checkpoint: magic "VLWB", u32 version, then named tensors
/// (u32 name length, UTF-8 name, u32 rank, u32 dims, f64 LE payload) to EOF.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

bool bitwise_equal(const EncoderParams& a, const EncoderParams& b);

}  // namespace vlwb::model
