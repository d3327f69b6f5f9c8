#include "vlwb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include <json.hpp>

#include "vlwb/imageio.hpp"
#include "vlwb/parallel.hpp"
#include "vlwb/rng.hpp"
#include "vlwb/train.hpp"

namespace vlwb::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using attacks::Method;
using attacks::Setting;

namespace {

constexpr std::array<Method, 3> kMethods{Method::kPgd, Method::kApgd, Method::kCw};
constexpr std::array<Setting, 2> kSettings{Setting::kNormal, Setting::kStrong};
constexpr std::array<Task, 3> kTasks{Task::kClassification, Task::kRetrieval, Task::kVqaSynthetic};

std::string attack_name(Task task, Method m, Setting s) {
  return config::to_string(task) + "-" + attacks::to_string(m) + "-" + attacks::to_string(s);
}

bool same_spec(const data::SyntheticSpec& a, const data::SyntheticSpec& b) {
  return a.classes == b.classes && a.colors == b.colors && a.per_class == b.per_class &&
         a.height == b.height && a.width == b.width && a.channels == b.channels &&
         a.noise_std == b.noise_std && a.seed == b.seed;
}

json parse_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file: " + path.string());
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON " + path.string() + ": " + e.what());
  }
}

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
json change_json(std::optional<double> c) { return c ? json(*c) : json(nullptr); }
double number_or_nan(const json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}
std::optional<double> optional_number(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

attacks::ScorerFactory scorer_factory(const Workbench& wb, Task task) {
  switch (task) {
    case Task::kClassification:
      return [&wb](std::size_t i) { return wb.target.scorer(wb.val[i].class_index); };
    case Task::kRetrieval: {
      auto rt = std::make_shared<tasks::RetrievalTarget>(
          tasks::build_retrieval_scorer(wb.params, wb.vocab, wb.val));
      return [rt](std::size_t i) { return rt->scorer(i); };
    }
    case Task::kVqaSynthetic: {
      auto rt = std::make_shared<tasks::RetrievalTarget>(
          tasks::build_synthetic_target(wb.params, wb.vocab, wb.val, wb.classes.classes));
      return [rt](std::size_t i) { return rt->scorer(i); };
    }
  }
  throw std::invalid_argument("unknown task");
}

json breakdown_json(const eval::Breakdown& b) {
  json rows = json::array();
  for (const auto& r : b.rows) {
    rows.push_back({{"key", r.key}, {"count", r.count}, {"pre", r.pre}, {"post", r.post},
                    {"drop", r.drop}});
  }
  return {{"title", b.title}, {"rows", rows}, {"notes", b.notes}};
}

eval::Breakdown breakdown_from_json(const json& j) {
  eval::Breakdown b;
  b.title = j.at("title").get<std::string>();
  for (const auto& r : j.at("rows")) {
    b.rows.push_back({r.at("key").get<std::string>(), r.at("count").get<std::size_t>(),
                      r.at("pre").get<double>(), r.at("post").get<double>(),
                      r.at("drop").get<double>()});
  }
  b.notes = j.at("notes").get<std::vector<std::string>>();
  return b;
}

/// Existence questions with a known answer: for each of class, color and
/// position, the true value ("yes") and the next value in the list ("no").
eval::Breakdown existence_breakdown(const Workbench& wb, const tasks::Answerer& answerer,
                                    const std::vector<Tensor>& clean,
                                    const std::vector<Tensor>& adv, const std::string& title) {
  const auto& colors = wb.cfg.data.colors;
  const auto& tags = data::position_tags();
  const std::size_t n_cls = wb.classes.size(), n_col = colors.size(), n_pos = tags.size();
  const std::string k_class = "is there a <class> in this image?";
  const std::string k_color = "is there a <color> object in this image?";
  const std::string k_pos = "is the object in the <position> of this image?";

  struct Question {
    std::size_t image;
    std::string key, prompt, expected;
  };
  std::vector<Question> qs;
  for (std::size_t i = 0; i < wb.val.size(); ++i) {
    const auto& s = wb.val[i];
    const auto col = static_cast<std::size_t>(
        std::find(colors.begin(), colors.end(), s.attributes.color) - colors.begin());
    const auto pos = static_cast<std::size_t>(
        std::find(tags.begin(), tags.end(), s.attributes.position) - tags.begin());
    qs.push_back({i, k_class, tasks::existence_prompt(wb.classes, s.class_index, false), "yes"});
    qs.push_back({i, k_class, tasks::existence_prompt(wb.classes, (s.class_index + 1) % n_cls,
                                                      false), "no"});
    qs.push_back({i, k_color, tasks::color_existence_prompt(colors.at(col)), "yes"});
    qs.push_back({i, k_color, tasks::color_existence_prompt(colors[(col + 1) % n_col]), "no"});
    qs.push_back({i, k_pos, tasks::position_existence_prompt(tags.at(pos)), "yes"});
    qs.push_back({i, k_pos, tasks::position_existence_prompt(tags[(pos + 1) % n_pos]), "no"});
  }
  std::vector<char> pre(qs.size()), post(qs.size());
  parallel_for(qs.size(), wb.cfg.parallelism, [&](std::size_t q) {
    const auto& question = qs[q];
    pre[q] = answerer.answer(clean[question.image], question.prompt).text == question.expected;
    post[q] = answerer.answer(adv[question.image], question.prompt).text == question.expected;
  });
  std::vector<std::string> keys;
  for (const auto& q : qs) keys.push_back(q.key);
  return eval::breakdown_by(title, keys, std::vector<bool>(pre.begin(), pre.end()),
                            std::vector<bool>(post.begin(), post.end()),
                            std::vector<std::string>{k_class, k_color, k_pos});
}

}  // namespace

fs::path RunPaths::attack(Task task, Method m, Setting s) const {
  return root / "attacks" / attack_name(task, m, s);
}

void write_snapshot(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text_file(dir / "config.toml", cfg.to_toml(true));
}

data::Dataset gen_data(const RunConfig& cfg) {
  const RunPaths paths{cfg.output};
  auto ds = data::generate_dataset(cfg.data, paths.data(), true, cfg.parallelism);
  write_snapshot(paths.data(), cfg);
  return ds;
}

model::TrainResult train(const RunConfig& cfg) {
  const RunPaths paths{cfg.output};
  const auto ds = data::load_dataset(paths.data());
  if (!same_spec(ds.spec, cfg.data)) {
    throw config::ConfigError("data: " + paths.data().string() +
                              " was generated from a different data config; rerun gen-data");
  }
  const auto vocab = data::build_vocabulary(ds.spec);
  auto init = model::init_params(cfg.model, vocab.size(), cfg.train.seed);
  auto result = model::contrastive_train(std::move(init), ds, vocab, cfg.train);
  fs::create_directories(paths.model());
  model::save_checkpoint(paths.params(), result.params);
  json curve = json::array();
  for (const auto& e : result.curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"mean_loss", e.mean_loss},
                     {"val_accuracy", e.val_accuracy},
                     {"temperature", e.temperature}});
  }
  const json log{{"format", "vlwb-train-log"}, {"version", 1}, {"epochs", curve}};
  write_text_file(paths.model() / "train_log.json", log.dump(2) + "\n");
  write_snapshot(paths.model(), cfg);
  return result;
}

std::vector<Tensor> Workbench::val_images() const {
  std::vector<Tensor> out;
  out.reserve(val.size());
  for (const auto& s : val) out.push_back(s.image);
  return out;
}

std::vector<std::size_t> Workbench::val_labels() const {
  std::vector<std::size_t> out;
  out.reserve(val.size());
  for (const auto& s : val) out.push_back(s.class_index);
  return out;
}

Workbench open(const RunConfig& cfg) {
  const RunPaths paths{cfg.output};
  Workbench wb;
  wb.cfg = cfg;
  wb.dataset = data::load_dataset(paths.data());
  if (!same_spec(wb.dataset.spec, cfg.data)) {
    throw config::ConfigError("data: " + paths.data().string() +
                              " was generated from a different data config; rerun gen-data");
  }
  if (!fs::exists(paths.params())) throw IoError("missing model: " + paths.params().string());
  wb.vocab = data::build_vocabulary(wb.dataset.spec);
  auto params = model::load_checkpoint(paths.params());
  if (params.vocab_size() != wb.vocab.size()) {
    throw IoError("model " + paths.params().string() + " does not match the data vocabulary");
  }
  wb.params = std::make_shared<const model::EncoderParams>(std::move(params));
  wb.classes = data::build_class_contexts(cfg.data.classes);
  wb.classes.templates.classification = data::PromptTemplate(cfg.classification_template);
  wb.val = wb.dataset.val();
  wb.target = tasks::build_classification_logits(wb.params, wb.vocab, wb.classes,
                                                 wb.classes.templates.classification);
  return wb;
}

attacks::BatchResult attack(const Workbench& wb, Task task, Method m, Setting s) {
  const RunPaths paths{wb.cfg.output};
  const auto cfg = wb.cfg.attack_config(m, s);
  std::vector<std::string> ids;
  for (const auto& sample : wb.val) ids.push_back(sample.id);
  auto batch = attacks::run_attack_batch(scorer_factory(wb, task), ids, wb.val_images(), cfg,
                                         wb.cfg.parallelism);
  const auto dir = paths.attack(task, m, s);
  fs::remove_all(dir);
  attacks::write_batch(dir, batch, cfg, config::to_string(task));
  write_snapshot(dir, wb.cfg);
  return batch;
}

void attack_all(const Workbench& wb, Task task) {
  for (const auto m : kMethods)
    for (const auto s : kSettings) attack(wb, task, m, s);
}

std::optional<std::vector<Tensor>> load_attack(const Workbench& wb, Task task, Method m,
                                               Setting s) {
  const auto dir = RunPaths{wb.cfg.output}.attack(task, m, s);
  if (!fs::exists(dir / "results.json")) return std::nullopt;
  const auto doc = parse_json_file(dir / "results.json");
  std::map<std::string, std::string> files;
  for (const auto& rec : doc.at("samples")) {
    if (rec.contains("file")) files[rec.at("id").get<std::string>()] = rec.at("file");
  }
  std::vector<Tensor> out;
  out.reserve(wb.val.size());
  for (const auto& sample : wb.val) {
    const auto it = files.find(sample.id);
    out.push_back(it == files.end() ? sample.image : read_imgf32(dir / it->second));
  }
  return out;
}

eval::EvalReport evaluate(const Workbench& wb) {
  const auto& cfg = wb.cfg;
  const std::size_t par = cfg.parallelism;
  const auto clean = wb.val_images();
  const auto labels = wb.val_labels();
  const tasks::ReferenceAnswerer cls_answerer(wb.params, wb.vocab, wb.classes, cfg.data.colors,
                                              tasks::AnswerMode::kClassification,
                                              cfg.eval.context_weight);
  const tasks::ReferenceAnswerer cap_answerer(wb.params, wb.vocab, wb.classes, cfg.data.colors,
                                              tasks::AnswerMode::kCaptioning,
                                              cfg.eval.context_weight);
  const auto gallery = eval::build_caption_gallery(*wb.params, wb.vocab, wb.val);
  const eval::AnswerContext actx{wb.params.get(), &wb.vocab, &wb.classes, &wb.target, &gallery};

  using Metric = std::function<double(const std::vector<Tensor>&)>;
  struct Spec {
    std::string model, task;
    Task source;
    Metric fn;
  };
  const Metric encoder_acc = [&](const std::vector<Tensor>& x) {
    return eval::eval_classification(wb.target, x, labels, par);
  };
  std::vector<Spec> specs;
  specs.push_back({"visual encoder", "classification", Task::kClassification, encoder_acc});
  specs.push_back({"answerer", "classification", Task::kClassification,
                   [&](const std::vector<Tensor>& x) {
                     return eval::eval_answerer(cls_answerer, wb.val, x,
                                                eval::AnswerTask::kClassification, false, actx,
                                                par);
                   }});
  if (cfg.eval.with_context) {
    specs.push_back({"answerer + context", "classification", Task::kClassification,
                     [&](const std::vector<Tensor>& x) {
                       return eval::eval_answerer(cls_answerer, wb.val, x,
                                                  eval::AnswerTask::kClassification, true, actx,
                                                  par);
                     }});
  }
  if (cfg.eval.qd) {
    specs.push_back({"answerer + QD (k=" + std::to_string(cfg.eval.k) + ")", "classification",
                     Task::kClassification, [&](const std::vector<Tensor>& x) {
                       return eval::eval_qd(cls_answerer, wb.val, x, wb.classes, cfg.eval.k,
                                            cfg.qd_seed(), par);
                     }});
  }
  specs.push_back({"visual encoder", "image-to-text recall@1", Task::kRetrieval,
                   [&](const std::vector<Tensor>& x) {
                     return eval::eval_retrieval_recall1(*wb.params, gallery, wb.val, x, par);
                   }});
  specs.push_back({"answerer", "answer-to-text recall@1", Task::kRetrieval,
                   [&](const std::vector<Tensor>& x) {
                     return eval::eval_answerer(cap_answerer, wb.val, x,
                                                eval::AnswerTask::kRetrieval, false, actx, par);
                   }});
  specs.push_back({"visual encoder", "classification, synthetic-caption target",
                   Task::kVqaSynthetic, encoder_acc});

  std::map<std::string, std::optional<std::vector<Tensor>>> cache;
  const auto adv = [&](Task t, Method m, Setting s) -> const std::optional<std::vector<Tensor>>& {
    const auto key = attack_name(t, m, s);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, load_attack(wb, t, m, s)).first;
    return it->second;
  };

  eval::EvalReport report;
  report.seed = cfg.seed;
  report.gallery_images = wb.val.size();
  report.config_echo = cfg.to_toml(false);
  for (const auto& spec : specs) {
    std::optional<double> pre;
    for (const auto m : kMethods) {
      const auto& normal = adv(spec.source, m, Setting::kNormal);
      const auto& strong = adv(spec.source, m, Setting::kStrong);
      if (!normal && !strong) continue;
      if (!pre) pre = spec.fn(clean);
      const double nan = std::nan("");
      report.rows.push_back(eval::MetricRow::make(spec.model, spec.task, attacks::to_string(m),
                                                  *pre, normal ? spec.fn(*normal) : nan,
                                                  strong ? spec.fn(*strong) : nan));
    }
  }

  for (const auto m : {Method::kApgd, Method::kPgd, Method::kCw}) {
    const auto& x = adv(Task::kClassification, m, Setting::kNormal);
    if (!x) continue;
    report.breakdowns.push_back(existence_breakdown(
        wb, cls_answerer, clean, *x,
        "Existence questions after " + attacks::to_string(m) + "-normal (class-prompt target)"));
    break;
  }

  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"model", r.model},
                    {"task", r.task},
                    {"method", r.method},
                    {"pre", r.pre},
                    {"post_normal", number_or_null(r.post_normal)},
                    {"post_strong", number_or_null(r.post_strong)},
                    {"change_normal", change_json(r.change_normal)},
                    {"change_strong", change_json(r.change_strong)},
                    {"display_normal", eval::display_change(r.change_normal)},
                    {"display_strong", eval::display_change(r.change_strong)},
                    {"score_valued", r.score_valued}});
  }
  json breakdowns = json::array();
  for (const auto& b : report.breakdowns) breakdowns.push_back(breakdown_json(b));
  const json doc{{"format", "vlwb-metrics"},
                 {"version", 1},
                 {"seed", cfg.seed},
                 {"gallery_images", report.gallery_images},
                 {"rows", rows},
                 {"breakdowns", breakdowns}};
  const auto dir = RunPaths{cfg.output}.eval();
  fs::create_directories(dir);
  write_text_file(dir / "metrics.json", doc.dump(2) + "\n");
  write_snapshot(dir, cfg);
  return report;
}

std::string qd_classify(const Workbench& wb) {
  const auto& cfg = wb.cfg;
  const tasks::ReferenceAnswerer answerer(wb.params, wb.vocab, wb.classes, cfg.data.colors,
                                          tasks::AnswerMode::kClassification,
                                          cfg.eval.context_weight);
  const auto gallery = eval::build_caption_gallery(*wb.params, wb.vocab, wb.val);
  const eval::AnswerContext actx{wb.params.get(), &wb.vocab, &wb.classes, &wb.target, &gallery};
  const auto plain = [&](const std::vector<Tensor>& x) {
    return eval::eval_answerer(answerer, wb.val, x, eval::AnswerTask::kClassification, false,
                               actx, cfg.parallelism);
  };
  const auto qd = [&](const std::vector<Tensor>& x) {
    return eval::eval_qd(answerer, wb.val, x, wb.classes, cfg.eval.k, cfg.qd_seed(),
                         cfg.parallelism);
  };
  const auto clean = wb.val_images();
  const double plain_pre = plain(clean), qd_pre = qd(clean);
  json runs = json::array();
  for (const auto m : kMethods) {
    for (const auto s : kSettings) {
      const auto x = load_attack(wb, Task::kClassification, m, s);
      if (!x) continue;
      const double p = plain(*x), q = qd(*x);
      runs.push_back({{"attack", attacks::to_string(m) + "-" + attacks::to_string(s)},
                      {"plain", p},
                      {"qd", q},
                      {"plain_change", change_json(eval::percent_change(plain_pre, p))},
                      {"qd_change", change_json(eval::percent_change(qd_pre, q))}});
    }
  }
  const json doc{{"format", "vlwb-qd"},
                 {"version", 1},
                 {"k", cfg.eval.k},
                 {"seed", cfg.qd_seed()},
                 {"clean", {{"plain", plain_pre}, {"qd", qd_pre}}},
                 {"attacks", runs}};
  const auto dir = RunPaths{cfg.output}.eval();
  fs::create_directories(dir);
  const auto text = doc.dump(2) + "\n";
  write_text_file(dir / "qd.json", text);
  write_snapshot(dir, cfg);
  return text;
}

eval::EvalReport report(const RunConfig& cfg) {
  const RunPaths paths{cfg.output};
  const auto doc = parse_json_file(paths.eval() / "metrics.json");
  eval::EvalReport r;
  try {
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.gallery_images = doc.at("gallery_images").get<std::size_t>();
    for (const auto& j : doc.at("rows")) {
      eval::MetricRow row;
      row.model = j.at("model").get<std::string>();
      row.task = j.at("task").get<std::string>();
      row.method = j.at("method").get<std::string>();
      row.pre = j.at("pre").get<double>();
      row.post_normal = number_or_nan(j.at("post_normal"));
      row.post_strong = number_or_nan(j.at("post_strong"));
      row.change_normal = optional_number(j.at("change_normal"));
      row.change_strong = optional_number(j.at("change_strong"));
      row.score_valued = j.at("score_valued").get<bool>();
      r.rows.push_back(std::move(row));
    }
    for (const auto& b : doc.at("breakdowns")) r.breakdowns.push_back(breakdown_from_json(b));
  } catch (const json::exception& e) {
    throw IoError("malformed metrics " + (paths.eval() / "metrics.json").string() + ": " +
                  e.what());
  }
  r.config_echo = cfg.to_toml(false);
  eval::write_report(paths.root, r);
  return r;
}

std::vector<std::string> verify(const RunConfig& cfg) {
  const RunPaths paths{cfg.output};
  std::vector<std::string> failures;
  const auto fail = [&](std::string msg) { failures.push_back(std::move(msg)); };

  const auto ds = data::load_dataset(paths.data());
  const auto vocab = data::build_vocabulary(ds.spec);
  for (const auto& s : ds.samples) {
    for (const auto& c : s.captions) {
      if (vocab.count_unknown(c) != 0) fail("caption of " + s.id + " has unknown words: " + c);
    }
    for (const double v : s.image.values()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        fail("image " + s.id + " has a pixel outside [0, 1]");
        break;
      }
    }
  }
  const auto classes = data::build_class_contexts(ds.spec.classes);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (vocab.count_unknown(classes.context(c)) != 0) fail("context of class " + classes.classes[c]);
  }
  if (!fs::exists(paths.params())) return failures;

  const Workbench wb = open(cfg);
  const auto& p = *wb.params;
  if (!(p.temperature >= model::kMinTemperature && p.temperature <= model::kMaxTemperature)) {
    fail("temperature outside [1, 100]");
  }
  for (std::size_t i = 0; i < wb.val.size(); ++i) {
    const auto logits = wb.target.logits(wb.val[i].image);
    for (const double z : logits) {
      if (!(std::abs(z) <= p.temperature * (1.0 + 1e-12))) {
        fail("logit of " + wb.val[i].id + " exceeds the temperature");
        break;
      }
    }
  }
  for (const auto& s : wb.val) {
    const auto set = tasks::sample_candidates(wb.classes.size(), cfg.eval.k, s.class_index,
                                              cfg.qd_seed(), s.id);
    if (std::find(set.indices.begin(), set.indices.end(), s.class_index) == set.indices.end()) {
      fail("candidate set of " + s.id + " misses the gold class");
    }
  }

  std::map<std::string, const data::ImageSample*> by_id;
  for (const auto& s : wb.val) by_id[s.id] = &s;
  for (const auto t : kTasks) {
    for (const auto m : kMethods) {
      for (const auto st : kSettings) {
        const auto dir = paths.attack(t, m, st);
        if (!fs::exists(dir / "results.json")) continue;
        const auto name = attack_name(t, m, st);
        const auto doc = parse_json_file(dir / "results.json");
        const auto& c = doc.at("config");
        const bool linf = m != Method::kCw;
        const double eps = linf ? c.at("epsilon").get<double>() : 0.0;
        for (const auto& rec : doc.at("samples")) {
          if (!rec.contains("file")) continue;
          const auto id = rec.at("id").get<std::string>();
          const auto it = by_id.find(id);
          if (it == by_id.end()) {
            fail(name + ": unknown sample " + id);
            continue;
          }
          const auto adv = read_imgf32(dir / rec.at("file").get<std::string>());
          const auto& x = it->second->image;
          double inf = 0.0, l2 = 0.0;
          bool box = true;
          for (std::size_t k = 0; k < x.size(); ++k) {
            const double d = adv[k] - x[k];
            inf = std::max(inf, std::abs(d));
            l2 += d * d;
            box = box && adv[k] >= 0.0 && adv[k] <= 1.0;
          }
          if (!box) fail(name + ": " + id + " leaves [0, 1]");
          if (linf && inf > eps + 1e-9) fail(name + ": " + id + " exceeds epsilon");
          if (std::abs(inf - rec.at("linf").get<double>()) > 1e-9 ||
              std::abs(std::sqrt(l2) - rec.at("l2").get<double>()) > 1e-9) {
            fail(name + ": " + id + " norms disagree with the stored image");
          }
          if (t == Task::kClassification) {
            const bool success =
                attacks::argmax(wb.target.logits(adv)) != it->second->class_index;
            if (success != rec.at("success").get<bool>()) {
              fail(name + ": " + id + " success flag disagrees with the stored image");
            }
          }
        }
      }
    }
  }

  if (fs::exists(paths.eval() / "metrics.json")) {
    const auto doc = parse_json_file(paths.eval() / "metrics.json");
    for (const auto& r : doc.at("rows")) {
      const double pre = r.at("pre").get<double>();
      for (const char* which : {"normal", "strong"}) {
        const auto& post = r.at(std::string("post_") + which);
        if (post.is_null()) continue;
        const auto change = eval::percent_change(pre, post.get<double>());
        const auto& stored = r.at(std::string("change_") + which);
        const bool same = change ? (!stored.is_null() && stored.get<double>() == *change)
                                 : stored.is_null();
        if (!same || r.at(std::string("display_") + which).get<std::string>() !=
                         eval::display_change(change)) {
          fail("metrics: change of " + r.at("model").get<std::string>() + " / " +
               r.at("method").get<std::string>() + " does not recompute");
        }
      }
    }
  }
  return failures;
}

void run_all(const RunConfig& cfg) {
  gen_data(cfg);
  train(cfg);
  const Workbench wb = open(cfg);
  for (const auto t : kTasks) attack_all(wb, t);
  evaluate(wb);
  qd_classify(wb);
  report(cfg);
}

}  // namespace vlwb::pipeline
