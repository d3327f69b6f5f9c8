#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlwb/tensor.hpp"
#include "vlwb/vocab.hpp"

namespace vlwb::data {

struct SyntheticSpec {
  std::vector<std::string> classes{"circle", "square", "triangle", "cross",
                                   "ring",   "bar",    "diamond",  "dot"};
  std::vector<std::string> colors{"red", "green", "blue", "yellow", "purple", "orange"};
  std::size_t per_class = 100;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  double noise_std = 0.03;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Position tags: the four quadrant centres and the image centre.
const std::array<std::string, 5>& position_tags();
const std::array<std::string, 2>& background_tags();

struct Attributes {
  std::string color;
  std::string position;
  std::string background;
};

enum class Split { kTrain, kVal };
std::string to_string(Split split);
Split parse_split(std::string_view text);

struct ImageSample {
  std::string id;
  Tensor image;  // H x W x C, values in [0, 1]
  std::size_t class_index = 0;
  std::array<std::string, 5> captions;
  Attributes attributes;
  Split split = Split::kTrain;
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<ImageSample> samples;

  std::vector<ImageSample> split(Split which) const;
  std::vector<ImageSample> train() const { return split(Split::kTrain); }
  std::vector<ImageSample> val() const { return split(Split::kVal); }
};

/// The five caption realizations for one image.
std::array<std::string, 5> make_captions(const std::string& shape, const Attributes& attrs);

/// Every word the workbench can emit or prompt with, plus `<unk>`.
Vocabulary build_vocabulary(const SyntheticSpec& spec);

/// Deterministic in spec.seed and independent of `parallelism`.
Dataset generate_samples(const SyntheticSpec& spec, std::size_t parallelism = 1);

/// Writes images/<id>.imgf32 and manifest.json under `dir`. Refuses to write
/// into an existing non-empty directory unless `overwrite` is set.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, bool overwrite);
Dataset load_dataset(const std::filesystem::path& dir);

Dataset generate_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir,
                         bool overwrite, std::size_t parallelism = 1);

/// Colour used to paint a shape, RGB in [0, 1].
std::array<double, 3> color_rgb(std::string_view color);

}  // namespace vlwb::data
