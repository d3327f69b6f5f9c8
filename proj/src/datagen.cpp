#include "vlwb/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "vlwb/imageio.hpp"
#include "vlwb/parallel.hpp"
#include "vlwb/rng.hpp"

namespace vlwb::data {

using nlohmann::json;

void SyntheticSpec::validate() const {
  if (classes.empty()) throw std::invalid_argument("spec: classes must be nonempty");
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size()) {
    throw std::invalid_argument("spec: class names must be distinct");
  }
  if (colors.empty()) throw std::invalid_argument("spec: colors must be nonempty");
  for (const auto& c : colors) (void)color_rgb(c);
  for (const auto& c : classes) (void)class_context(c);
  if (per_class < 1) throw std::invalid_argument("spec: per_class must be >= 1");
  if (!(noise_std >= 0.0 && noise_std <= 0.2)) {
    throw std::invalid_argument("spec: noise_std must lie in [0, 0.2]");
  }
  if (channels != 3) throw std::invalid_argument("spec: only 3-channel images are supported");
  if (height < 8 || width < 8) throw std::invalid_argument("spec: image must be at least 8x8");
}

const std::array<std::string, 5>& position_tags() {
  static const std::array<std::string, 5> tags{"upper left", "upper right", "center",
                                               "lower left", "lower right"};
  return tags;
}

const std::array<std::string, 2>& background_tags() {
  static const std::array<std::string, 2> tags{"dark", "black"};
  return tags;
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "val"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  throw std::invalid_argument("unknown split: " + std::string(text));
}

std::array<double, 3> color_rgb(std::string_view color) {
  if (color == "red") return {0.90, 0.10, 0.10};
  if (color == "green") return {0.10, 0.75, 0.15};
  if (color == "blue") return {0.15, 0.25, 0.95};
  if (color == "yellow") return {0.95, 0.90, 0.10};
  if (color == "purple") return {0.60, 0.15, 0.80};
  if (color == "orange") return {1.00, 0.55, 0.05};
  throw std::invalid_argument("unknown color: " + std::string(color));
}

std::vector<ImageSample> Dataset::split(Split which) const {
  std::vector<ImageSample> out;
  for (const auto& s : samples)
    if (s.split == which) out.push_back(s);
  return out;
}

std::array<std::string, 5> make_captions(const std::string& shape, const Attributes& a) {
  return {
      "a " + a.color + " " + shape + " in the " + a.position + " on a " + a.background +
          " background",
      "a photo of a " + a.color + " " + shape + " in the " + a.position,
      "the " + shape + " in the " + a.position + " is " + a.color,
      "a photo of a " + a.color + " " + shape + " at the " + a.position + " of a " + a.background +
          " picture",
      "there is a " + a.color + " " + shape + " in the " + a.position + " of the image",
  };
}

Vocabulary build_vocabulary(const SyntheticSpec& spec) {
  std::vector<std::string> words;
  auto add = [&](std::string_view text) {
    for (auto& w : tokenize(text)) words.push_back(std::move(w));
  };
  const PromptTemplates templates;
  for (const auto* t : {&templates.classification, &templates.existence, &templates.question,
                        &templates.caption}) {
    add(t->instantiate(""));
  }
  for (const auto& c : spec.classes) {
    add(c);
    add(class_context(c));
  }
  for (const auto& c : spec.colors) add(c);
  for (const auto& p : position_tags()) add(p);
  for (const auto& b : background_tags()) add(b);
  for (const auto& caption : make_captions("x", {"x", "x", "x"})) add(caption);
  add("yes no");
  return Vocabulary(std::move(words));
}

namespace {

struct Placement {
  double cx, cy, size;
};

bool inside(std::string_view shape, double dx, double dy, double s) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  if (shape == "circle") return dx * dx + dy * dy <= s * s;
  if (shape == "dot") return dx * dx + dy * dy <= 0.16 * s * s;
  if (shape == "ring") {
    const double r2 = dx * dx + dy * dy;
    return r2 <= s * s && r2 >= 0.3 * s * s;
  }
  if (shape == "square") return ax <= 0.85 * s && ay <= 0.85 * s;
  if (shape == "diamond") return ax / 0.65 + ay <= 1.2 * s;
  if (shape == "triangle") {
    // apex at the top, base below the centre
    const double top = -s, bottom = 0.8 * s;
    if (dy < top || dy > bottom) return false;
    return ax <= s * (dy - top) / (bottom - top);
  }
  if (shape == "cross") return (ax <= 0.3 * s && ay <= s) || (ay <= 0.3 * s && ax <= s);
  if (shape == "bar") return ax <= 1.15 * s && ay <= 0.3 * s;
  throw std::invalid_argument("no renderer for shape: " + std::string(shape));
}

ImageSample render_sample(const SyntheticSpec& spec, std::size_t index, std::size_t cls,
                          std::uint64_t stream) {
  Rng rng(stream);
  ImageSample s;
  char id[32];
  std::snprintf(id, sizeof id, "img_%05zu", index);
  s.id = id;
  s.class_index = cls;
  const auto color = rng.below(spec.colors.size());
  const auto cell = rng.below(position_tags().size());
  const auto bg = rng.below(background_tags().size());
  s.attributes = {spec.colors[color], position_tags()[cell], background_tags()[bg]};
  s.captions = make_captions(spec.classes[cls], s.attributes);

  // anchor centres as fractions of the image extent, in position_tags() order
  static constexpr std::array<std::array<double, 2>, 5> anchors{
      {{0.25, 0.25}, {0.75, 0.25}, {0.5, 0.5}, {0.25, 0.75}, {0.75, 0.75}}};
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  Placement p;
  p.cx = w * anchors[cell][0] + rng.uniform(-0.5, 0.5);
  p.cy = h * anchors[cell][1] + rng.uniform(-0.5, 0.5);
  p.size = rng.uniform(0.2, 0.25) * std::min(h, w);

  const auto rgb = color_rgb(s.attributes.color);
  const double bg_level = bg == 0 ? 0.08 : 0.0;
  s.image = Tensor({spec.height, spec.width, spec.channels});
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = static_cast<double>(x) + 0.25 + 0.5 * sx;
          const double py = static_cast<double>(y) + 0.25 + 0.5 * sy;
          hits += inside(spec.classes[cls], px - p.cx, py - p.cy, p.size) ? 1 : 0;
        }
      }
      const double cover = hits / 4.0;
      for (std::size_t c = 0; c < spec.channels; ++c) {
        double v = bg_level * (1.0 - cover) + rgb[c] * cover;
        if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
        s.image[(y * spec.width + x) * spec.channels + c] =
            static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
      }
    }
  }
  return s;
}

json spec_to_json(const SyntheticSpec& spec) {
  return json{{"classes", spec.classes},   {"colors", spec.colors},
              {"per_class", spec.per_class}, {"height", spec.height},
              {"width", spec.width},         {"channels", spec.channels},
              {"noise_std", spec.noise_std}, {"seed", spec.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
  SyntheticSpec spec;
  spec.classes = j.at("classes").get<std::vector<std::string>>();
  spec.colors = j.at("colors").get<std::vector<std::string>>();
  spec.per_class = j.at("per_class").get<std::size_t>();
  spec.height = j.at("height").get<std::size_t>();
  spec.width = j.at("width").get<std::size_t>();
  spec.channels = j.at("channels").get<std::size_t>();
  spec.noise_std = j.at("noise_std").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  return spec;
}

}  // namespace

Dataset generate_samples(const SyntheticSpec& spec, std::size_t parallelism) {
  spec.validate();
  const std::size_t k = spec.classes.size();
  const std::size_t n = k * spec.per_class;
  const std::uint64_t sample_seed = derive_seed(spec.seed, "sample");

  Dataset ds;
  ds.spec = spec;
  ds.samples.resize(n);
  parallel_for(n, parallelism, [&](std::size_t i) {
    ds.samples[i] = render_sample(spec, i, i / spec.per_class, derive_seed(sample_seed, i));
  });

  // Stratified 80/20 split: shuffle each class block, first 80% train.
  Rng split_rng(derive_seed(spec.seed, "split"));
  const std::size_t n_train = (spec.per_class * 4 + 2) / 5;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> order(spec.per_class);
    for (std::size_t j = 0; j < spec.per_class; ++j) order[j] = c * spec.per_class + j;
    shuffle(order.begin(), order.end(), split_rng);
    for (std::size_t j = 0; j < order.size(); ++j) {
      ds.samples[order[j]].split = j < n_train ? Split::kTrain : Split::kVal;
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!overwrite) throw IoError("output directory exists and is not empty: " + dir.string());
    fs::remove_all(dir);
  }
  fs::create_directories(dir / "images");

  json records = json::array();
  for (const auto& s : dataset.samples) {
    const auto file = "images/" + s.id + ".imgf32";
    write_imgf32(dir / file, s.image);
    records.push_back(json{{"id", s.id},
                           {"file", file},
                           {"class_index", s.class_index},
                           {"class_name", dataset.spec.classes.at(s.class_index)},
                           {"captions", s.captions},
                           {"attributes",
                            {{"color", s.attributes.color},
                             {"position", s.attributes.position},
                             {"background", s.attributes.background}}},
                           {"split", to_string(s.split)}});
  }
  const json manifest{{"format", "vlwb-manifest"},
                      {"version", 1},
                      {"spec", spec_to_json(dataset.spec)},
                      {"samples", std::move(records)}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw IoError("missing manifest: " + path.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const auto& r : manifest.at("samples")) {
    ImageSample s;
    s.id = r.at("id").get<std::string>();
    s.image = read_imgf32(dir / r.at("file").get<std::string>());
    s.class_index = r.at("class_index").get<std::size_t>();
    const auto caps = r.at("captions").get<std::vector<std::string>>();
    if (caps.size() != 5) throw IoError("sample " + s.id + " does not have exactly 5 captions");
    std::copy(caps.begin(), caps.end(), s.captions.begin());
    const auto& a = r.at("attributes");
    s.attributes = {a.at("color").get<std::string>(), a.at("position").get<std::string>(),
                    a.at("background").get<std::string>()};
    s.split = parse_split(r.at("split").get<std::string>());
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset generate_dataset(const SyntheticSpec& spec, const std::filesystem::path& dir,
                         bool overwrite, std::size_t parallelism) {
  auto ds = generate_samples(spec, parallelism);
  write_dataset(ds, dir, overwrite);
  return ds;
}

}  // namespace vlwb::data
