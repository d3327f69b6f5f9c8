#include "vlwb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "vlwb/imageio.hpp"
#include "vlwb/parallel.hpp"

namespace vlwb::eval {

namespace {

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": no samples");
}

double percent(std::size_t hits, std::size_t n) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

std::size_t count(const std::vector<char>& flags) {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), char{1}));
}

std::size_t top_caption(const model::Embedding& query, const Tensor& bank) {
  const std::size_t n = bank.dim(0), d = bank.dim(1);
  const auto v = query.values();
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s[i] += v[j] * bank[i * d + j];
  return attacks::argmax(s);
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

double eval_classification(const tasks::ClassificationTarget& target,
                           std::span<const Tensor> images, std::span<const std::size_t> labels,
                           std::size_t parallelism) {
  require_nonempty(images.size(), "eval_classification");
  if (images.size() != labels.size()) {
    throw std::invalid_argument("eval_classification: images and labels differ in length");
  }
  std::vector<char> hit(images.size(), 0);
  parallel_for(images.size(), parallelism, [&](std::size_t i) {
    hit[i] = attacks::argmax(target.logits(images[i])) == labels[i];
  });
  return percent(count(hit), images.size());
}

bool CaptionGallery::matches(std::size_t c, const data::ImageSample& sample) const {
  return std::find(sample.captions.begin(), sample.captions.end(), texts.at(c)) !=
         sample.captions.end();
}

CaptionGallery build_caption_gallery(const model::EncoderParams& params,
                                     const data::Vocabulary& vocab,
                                     std::span<const data::ImageSample> gallery) {
  if (gallery.size() < 2) throw std::invalid_argument("caption gallery: need at least 2 images");
  std::vector<std::string> texts;
  CaptionGallery out;
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    for (const auto& c : gallery[j].captions) {
      texts.push_back(c);
      out.owner.push_back(j);
    }
  }
  auto bank = tasks::embed_texts(params, vocab, std::move(texts));
  out.texts = std::move(bank.texts);
  out.embeddings = std::move(bank.embeddings);
  return out;
}

double eval_retrieval_recall1(const model::EncoderParams& params, const CaptionGallery& bank,
                              std::span<const data::ImageSample> gallery,
                              std::span<const Tensor> queries, std::size_t parallelism) {
  if (gallery.size() < 2) throw std::invalid_argument("recall@1: need at least 2 images");
  if (queries.size() != gallery.size()) {
    throw std::invalid_argument("recall@1: one query per gallery image expected");
  }
  std::vector<char> hit(queries.size(), 0);
  parallel_for(queries.size(), parallelism, [&](std::size_t j) {
    const auto c = top_caption(model::encode_image(params, queries[j]), *bank.embeddings);
    hit[j] = bank.matches(c, gallery[j]);
  });
  return percent(count(hit), queries.size());
}

double eval_answerer(const tasks::Answerer& answerer, std::span<const data::ImageSample> samples,
                     std::span<const Tensor> images, AnswerTask task, bool with_context,
                     const AnswerContext& ctx, std::size_t parallelism) {
  require_nonempty(samples.size(), "eval_answerer");
  if (images.size() != samples.size()) {
    throw std::invalid_argument("eval_answerer: samples and images differ in length");
  }
  if (!ctx.params || !ctx.vocab || !ctx.classes) {
    throw std::invalid_argument("eval_answerer: incomplete context");
  }
  if (task == AnswerTask::kClassification && !ctx.target) {
    throw std::invalid_argument("eval_answerer: classification needs a class bank");
  }
  if (task == AnswerTask::kRetrieval && !ctx.captions) {
    throw std::invalid_argument("eval_answerer: retrieval needs a caption gallery");
  }
  std::vector<char> hit(samples.size(), 0);
  parallel_for(samples.size(), parallelism, [&](std::size_t i) {
    const auto& s = samples[i];
    if (task == AnswerTask::kClassification) {
      const auto a = answerer.answer(images[i], tasks::question_prompt(*ctx.classes, s.class_index,
                                                                      with_context));
      hit[i] = tasks::answer_to_class(a.text, *ctx.target, *ctx.vocab,
                                      ctx.classes->templates.classification) == s.class_index;
      return;
    }
    const auto a = answerer.answer(images[i], tasks::caption_prompt(*ctx.classes));
    const auto words = data::tokenize(a.text);
    if (words.empty() || ctx.vocab->count_unknown(a.text) == words.size()) return;
    const auto emb = model::encode_text(*ctx.params, ctx.vocab->encode(a.text));
    hit[i] = ctx.captions->matches(top_caption(emb, *ctx.captions->embeddings), s);
  });
  return percent(count(hit), samples.size());
}

double eval_qd(const tasks::Answerer& answerer, std::span<const data::ImageSample> samples,
               std::span<const Tensor> images, const data::ClassVocab& classes, std::size_t k,
               std::uint64_t seed, std::size_t parallelism) {
  require_nonempty(samples.size(), "eval_qd");
  if (images.size() != samples.size()) {
    throw std::invalid_argument("eval_qd: samples and images differ in length");
  }
  std::vector<char> hit(samples.size(), 0);
  parallel_for(samples.size(), parallelism, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto set = tasks::sample_candidates(classes.size(), k, s.class_index, seed, s.id);
    hit[i] = tasks::query_decomposition_classify(answerer, images[i], classes, set) ==
             s.class_index;
  });
  return percent(count(hit), samples.size());
}

std::optional<double> percent_change(double pre, double post) {
  if (pre == 0.0 || std::isnan(pre) || std::isnan(post)) return std::nullopt;
  return (post - pre) / pre * 100.0;
}

std::string display_change(std::optional<double> change) {
  if (!change) return "n/a";
  const double r = std::round(*change);  // half away from zero
  if (r == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.0f", r);
  return buf;
}

MetricRow MetricRow::make(std::string model, std::string task, std::string method, double pre,
                          double post_normal, double post_strong) {
  MetricRow r;
  r.model = std::move(model);
  r.task = std::move(task);
  r.method = std::move(method);
  r.pre = pre;
  r.post_normal = post_normal;
  r.post_strong = post_strong;
  r.change_normal = percent_change(pre, post_normal);
  r.change_strong = percent_change(pre, post_strong);
  return r;
}

Breakdown breakdown_by(std::string title, std::span<const std::string> keys,
                       const std::vector<bool>& pre_correct, const std::vector<bool>& post_correct,
                       std::span<const std::string> expected) {
  if (keys.size() != pre_correct.size() || keys.size() != post_correct.size()) {
    throw std::invalid_argument("breakdown_by: keys and results differ in length");
  }
  struct Tally {
    std::size_t n = 0, pre = 0, post = 0;
  };
  std::map<std::string, Tally> groups;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(keys[i]);
    if (fresh) order.push_back(keys[i]);
    ++it->second.n;
    it->second.pre += pre_correct[i] ? 1 : 0;
    it->second.post += post_correct[i] ? 1 : 0;
  }
  Breakdown b;
  b.title = std::move(title);
  for (const auto& key : order) {
    const auto& t = groups.at(key);
    BreakdownRow row;
    row.key = key;
    row.count = t.n;
    row.pre = percent(t.pre, t.n);
    row.post = percent(t.post, t.n);
    row.drop = row.pre - row.post;
    b.rows.push_back(row);
  }
  std::stable_sort(b.rows.begin(), b.rows.end(),
                   [](const BreakdownRow& a, const BreakdownRow& c) { return a.drop > c.drop; });
  for (const auto& key : expected) {
    if (!groups.contains(key)) b.notes.push_back("group \"" + key + "\" has no samples; omitted");
  }
  return b;
}

std::string render_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "model,task,method,pre,post_normal,post_strong,change_normal,change_strong,unit\n";
  const auto change = [](std::optional<double> c) { return c ? full(*c) : std::string(); };
  for (const auto& r : report.rows) {
    out << csv_field(r.model) << ',' << csv_field(r.task) << ',' << csv_field(r.method) << ','
        << full(r.pre) << ',' << full(r.post_normal) << ',' << full(r.post_strong) << ','
        << change(r.change_normal) << ',' << change(r.change_strong) << ','
        << (r.score_valued ? "score" : "percent") << '\n';
  }
  return out.str();
}

std::string render_markdown(const EvalReport& report) {
  std::ostringstream out;
  out << "# Robustness report\n\n";
  out << "Seed " << report.seed << ". Val set of " << report.gallery_images << " images ("
      << 5 * report.gallery_images
      << " captions for retrieval). Percent change w.r.t. Pre in parentheses.\n";
  std::string task;
  for (const auto& r : report.rows) {
    if (r.task != task) {
      task = r.task;
      out << "\n## " << task << "\n\n";
      out << "| Model | Attack | Pre | Post_N | Post_S |\n";
      out << "|---|---|---:|---:|---:|\n";
    }
    out << "| " << r.model << " | " << r.method << " | " << fixed(r.pre, 2) << " | "
        << fixed(r.post_normal, 2) << " (" << display_change(r.change_normal) << ") | "
        << fixed(r.post_strong, 2) << " (" << display_change(r.change_strong) << ") |\n";
  }
  for (const auto& b : report.breakdowns) {
    out << "\n## " << b.title << "\n\n";
    out << "| Group | n | Pre | Post | Drop |\n|---|---:|---:|---:|---:|\n";
    for (const auto& r : b.rows) {
      out << "| " << r.key << " | " << r.count << " | " << fixed(r.pre, 2) << " | "
          << fixed(r.post, 2) << " | " << fixed(r.drop, 2) << " |\n";
    }
    for (const auto& n : b.notes) out << "\n" << n << "\n";
  }
  if (!report.config_echo.empty()) {
    out << "\n## Configuration\n\n```toml\n" << report.config_echo;
    if (report.config_echo.back() != '\n') out << '\n';
    out << "```\n";
  }
  return out.str();
}

std::string render_svg(const Breakdown& breakdown) {
  constexpr int kLabel = 260, kBar = 320, kRow = 26, kTop = 40;
  const int height = kTop + kRow * static_cast<int>(breakdown.rows.size()) + 20;
  const int width = kLabel + kBar + 80;
  double scale = 1.0;
  for (const auto& r : breakdown.rows) scale = std::max(scale, std::abs(r.drop));
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"10\" y=\"22\" font-size=\"14\">" << xml_escape(breakdown.title)
      << " (accuracy drop, points)</text>\n";
  int y = kTop;
  for (const auto& r : breakdown.rows) {
    const int w = static_cast<int>(std::lround(kBar * std::max(0.0, r.drop) / scale));
    out << "<text x=\"" << kLabel - 8 << "\" y=\"" << y + 15 << "\" text-anchor=\"end\">"
        << xml_escape(r.key) << "</text>\n";
    out << "<rect x=\"" << kLabel << "\" y=\"" << y + 3 << "\" width=\"" << w
        << "\" height=\"" << kRow - 8 << "\" fill=\"#4a7ab5\"/>\n";
    out << "<text x=\"" << kLabel + w + 6 << "\" y=\"" << y + 15 << "\">" << fixed(r.drop, 1)
        << "</text>\n";
    y += kRow;
  }
  out << "</svg>\n";
  return out.str();
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.csv", render_csv(report));
  write_text_file(dir / "report.md", render_markdown(report));
  if (!report.breakdowns.empty()) {
    write_text_file(dir / "breakdown.svg", render_svg(report.breakdowns.front()));
  }
}

}  // namespace vlwb::eval
