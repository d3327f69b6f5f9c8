#include "vlwb/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "vlwb/imageio.hpp"
#include "vlwb/parallel.hpp"

namespace vlwb::attacks {

using diff::Graph;
using diff::Var;

std::string to_string(Method m) {
  switch (m) {
    case Method::kPgd: return "pgd";
    case Method::kApgd: return "apgd";
    case Method::kCw: return "cw";
  }
  return "?";
}

std::string to_string(Setting s) { return s == Setting::kNormal ? "normal" : "strong"; }

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace

Method parse_method(std::string_view text) {
  const auto t = lower(text);
  if (t == "pgd") return Method::kPgd;
  if (t == "apgd") return Method::kApgd;
  if (t == "cw") return Method::kCw;
  throw std::invalid_argument("unknown attack method: " + std::string(text));
}

Setting parse_setting(std::string_view text) {
  const auto t = lower(text);
  if (t == "normal") return Setting::kNormal;
  if (t == "strong") return Setting::kStrong;
  throw std::invalid_argument("unknown attack setting: " + std::string(text));
}

void AttackConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("attack: steps must be positive");
  switch (method) {
    case Method::kPgd:
      if (!step_size || !(*step_size > 0.0)) {
        throw std::invalid_argument("attack: pgd needs a positive step_size");
      }
      [[fallthrough]];
    case Method::kApgd:
      if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("attack: epsilon must be finite and non-negative");
      }
      if (norm != Norm::kLinf) throw std::invalid_argument("attack: pgd/apgd use the L-inf norm");
      if (method == Method::kApgd && step_size) {
        throw std::invalid_argument("attack: apgd takes no step_size");
      }
      break;
    case Method::kCw:
      if (!step_size || !(*step_size > 0.0)) {
        throw std::invalid_argument("attack: cw needs a positive step_size");
      }
      if (!(c > 0.0)) throw std::invalid_argument("attack: cw needs c > 0");
      if (!(kappa >= 0.0)) throw std::invalid_argument("attack: cw needs kappa >= 0");
      if (norm != Norm::kL2) throw std::invalid_argument("attack: cw uses the L2 norm");
      break;
  }
}

AttackConfig preset(Method method, Setting setting) {
  const bool strong = setting == Setting::kStrong;
  AttackConfig cfg;
  cfg.method = method;
  cfg.setting = setting;
  switch (method) {
    case Method::kPgd:
      cfg.steps = strong ? 40 : 20;
      cfg.step_size = 2.0 / 255.0;
      cfg.epsilon = strong ? 0.2 : 8.0 / 255.0;
      break;
    case Method::kApgd:
      cfg.steps = strong ? 40 : 20;
      cfg.epsilon = strong ? 0.2 : 8.0 / 255.0;
      break;
    case Method::kCw:
      cfg.steps = strong ? 75 : 50;
      cfg.step_size = strong ? 0.05 : 0.01;
      cfg.c = strong ? 100.0 : 20.0;
      cfg.kappa = 0.0;
      cfg.epsilon = 0.0;
      cfg.norm = Norm::kL2;
      break;
  }
  return cfg;
}

std::vector<double> ScorerGraph::logits(const Tensor& image) const {
  Graph g;
  const auto f = prepare(g);
  const Var z = f(g, g.constant(image));
  return z.value().storage();
}

ScorerGraph linear_scorer(Tensor weights, std::vector<double> bias, std::size_t label) {
  if (weights.rank() != 2 || weights.dim(0) != bias.size()) {
    throw ShapeError("linear_scorer: weights " + vlwb::to_string(weights.shape()) + " vs " +
                     std::to_string(bias.size()) + " biases");
  }
  ScorerGraph s;
  s.label = label;
  s.prepare = [weights = std::move(weights), bias = std::move(bias)](Graph& g) -> LogitFn {
    const Var w = g.constant(weights);
    const Var b = g.constant(Tensor::vector(bias));
    const std::size_t n = weights.dim(1), k = weights.dim(0);
    return [w, b, n, k](Graph&, Var image) {
      const Var col = diff::reshape(image, {n, 1});
      return diff::add(diff::reshape(diff::matmul(w, col), {k}), b);
    };
  };
  return s;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("cross_entropy: label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s) - logits[label];
}

double cw_margin_loss(std::span<const double> logits, std::size_t label, double kappa) {
  if (label >= logits.size() || logits.size() < 2) {
    throw std::out_of_range("cw_margin_loss: need >= 2 logits and a valid label");
  }
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (i != label) other = std::max(other, logits[i]);
  return std::max(logits[label] - other, -kappa);
}

namespace {

void check_input(const Tensor& x) {
  if (x.empty()) throw std::invalid_argument("attack: empty image");
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("attack: pixel " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

// Nearest float32 to v that still lies in [lo, hi]. Adversarial images are
// stored as float32, so iterates are kept on that grid.
double quantize_into(double v, double lo, double hi) {
  float a = static_cast<float>(v);
  if (static_cast<double>(a) > hi) a = std::nextafter(a, -std::numeric_limits<float>::infinity());
  if (static_cast<double>(a) < lo) a = std::nextafter(a, std::numeric_limits<float>::infinity());
  return static_cast<double>(a);
}

struct Box {
  std::vector<double> lo, hi;
};

Box feasible_box(const Tensor& x, double eps) {
  Box b;
  b.lo.resize(x.size());
  b.hi.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    b.lo[i] = std::max(0.0, x[i] - eps);
    b.hi[i] = std::min(1.0, x[i] + eps);
  }
  return b;
}

Tensor project(const Tensor& v, const Box& box) {
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = quantize_into(std::clamp(v[i], box.lo[i], box.hi[i]), box.lo[i], box.hi[i]);
  }
  return out;
}

// Scorer bound once to a graph; each evaluation reuses the fixed prefix.
class Evaluator {
 public:
  explicit Evaluator(const ScorerGraph& scorer)
      : label_(scorer.label), f_(scorer.prepare(g_)), mark_(g_.size()) {}

  Graph& graph() { return g_; }
  const LogitFn& fn() const { return f_; }
  std::size_t label() const { return label_; }
  void reset() { g_.truncate(mark_); }

  void check_logits(const Var& z) const {
    if (z.value().rank() != 1) {
      throw ShapeError("attack: scorer must return a 1-D logit vector, got " +
                       vlwb::to_string(z.shape()));
    }
    if (label_ >= z.value().size()) {
      throw std::out_of_range("attack: label " + std::to_string(label_) + " >= " +
                              std::to_string(z.value().size()) + " logits");
    }
  }

  std::vector<double> logits(const Tensor& image) {
    reset();
    const Var z = f_(g_, g_.constant(image));
    check_logits(z);
    return z.value().storage();
  }

  /// Cross-entropy at `image` and its gradient with respect to the image.
  double ce(const Tensor& image, Tensor* grad, std::size_t step) {
    reset();
    const Var in = g_.leaf(image, grad != nullptr);
    const Var z = f_(g_, in);
    check_logits(z);
    const Var loss = diff::softmax_cross_entropy(z, label_);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw AttackAborted(step, "attack: loss is not finite at step " + std::to_string(step));
    }
    if (grad) {
      g_.backward(loss);
      *grad = g_.grad(in);
    }
    return value;
  }

 private:
  Graph g_;
  std::size_t label_;
  LogitFn f_;
  std::size_t mark_;
};

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void finalize(AttackResult& r, const Tensor& x, const Tensor& adv, Evaluator& ev) {
  r.delta = Tensor(x.shape());
  r.adv_image = Tensor(x.shape());
  double linf = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.delta[i] = adv[i] - x[i];
    r.adv_image[i] = std::clamp(x[i] + r.delta[i], 0.0, 1.0);
    linf = std::max(linf, std::abs(r.delta[i]));
    l2 += r.delta[i] * r.delta[i];
  }
  r.linf_norm = linf;
  r.l2_norm = std::sqrt(l2);
  r.success = argmax(ev.logits(r.adv_image)) != ev.label();
}

}  // namespace

AttackResult pgd_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg) {
  if (cfg.method != Method::kPgd) throw std::invalid_argument("pgd_attack: method is not pgd");
  cfg.validate();
  check_input(x);
  Evaluator ev(scorer);
  const Box box = feasible_box(x, cfg.epsilon);
  const double alpha = *cfg.step_size;

  AttackResult r;
  Tensor adv = x, grad;
  r.initial_loss = ev.ce(adv, &grad, 0);
  r.best_objective = r.initial_loss;
  double current = r.initial_loss;
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    Tensor next(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = adv[i] + alpha * sign(grad[i]);
    adv = project(next, box);
    current = ev.ce(adv, t < cfg.steps ? &grad : nullptr, t);
    r.loss_trajectory.push_back(current);
    r.best_objective = std::max(r.best_objective, current);
  }
  r.returned_objective = current;
  finalize(r, x, adv, ev);
  return r;
}

std::vector<std::size_t> apgd_checkpoints(std::size_t steps) {
  std::vector<std::size_t> out;
  const double n = static_cast<double>(steps);
  double prev = 0.0, p = 0.22;
  while (p <= 1.0) {
    const auto w = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    if (w >= 1 && w <= steps && (out.empty() || w > out.back())) out.push_back(w);
    const double next = p + std::max(p - prev - 0.03, 0.06);
    prev = p;
    p = next;
  }
  return out;
}

AttackResult apgd_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg) {
  if (cfg.method != Method::kApgd) throw std::invalid_argument("apgd_attack: method is not apgd");
  cfg.validate();
  check_input(x);
  constexpr double kMomentum = 0.75;
  constexpr double kRho = 0.75;
  Evaluator ev(scorer);
  const Box box = feasible_box(x, cfg.epsilon);
  const auto checkpoints = apgd_checkpoints(cfg.steps);

  AttackResult r;
  Tensor cur = x, prev = x, grad;
  double f_cur = ev.ce(cur, &grad, 0);
  r.initial_loss = f_cur;
  Tensor best = cur, best_grad = grad;
  double f_best = f_cur;

  double eta = 2.0 * cfg.epsilon;
  std::size_t improved = 0, last_checkpoint = 0, next_checkpoint = 0;
  bool reduced_last = false;
  double f_best_last = f_best;

  for (std::size_t k = 0; k < cfg.steps; ++k) {
    r.step_sizes.push_back(eta);
    Tensor z(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = cur[i] + eta * sign(grad[i]);
    z = project(z, box);
    Tensor next = z;
    if (k > 0) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        next[i] = cur[i] + kMomentum * (z[i] - cur[i]) + (1.0 - kMomentum) * (cur[i] - prev[i]);
      }
      next = project(next, box);
    }
    Tensor next_grad;
    const double f_next = ev.ce(next, &next_grad, k + 1);
    r.loss_trajectory.push_back(f_next);
    if (f_next > f_cur) ++improved;
    if (f_next > f_best) {
      f_best = f_next;
      best = next;
      best_grad = next_grad;
    }
    prev = std::move(cur);
    cur = std::move(next);
    grad = std::move(next_grad);
    f_cur = f_next;

    if (next_checkpoint < checkpoints.size() && k + 1 == checkpoints[next_checkpoint]) {
      const std::size_t w = checkpoints[next_checkpoint];
      const bool few_improvements =
          static_cast<double>(improved) < kRho * static_cast<double>(w - last_checkpoint);
      const bool stalled = !reduced_last && f_best_last >= f_best;
      const bool reduce = few_improvements || stalled;
      if (reduce) {
        eta /= 2.0;
        cur = best;
        prev = best;
        grad = best_grad;
        f_cur = f_best;
      }
      reduced_last = reduce;
      f_best_last = f_best;
      improved = 0;
      last_checkpoint = w;
      ++next_checkpoint;
    }
  }
  r.best_objective = std::max(r.initial_loss, f_best);
  r.returned_objective = f_best;
  finalize(r, x, best, ev);
  return r;
}

namespace {

constexpr double kTanhShrink = 1.0 - 1e-6;

struct CwEval {
  double objective = 0.0;
  Tensor adv;
  Tensor grad_w;
  std::vector<double> logits;
};

CwEval cw_evaluate(Evaluator& ev, const Tensor& w, const Tensor& x, const AttackConfig& cfg,
                   bool need_grad, std::size_t step) {
  ev.reset();
  Graph& g = ev.graph();
  const Var wv = g.leaf(w, need_grad);
  const Var adv = diff::scale(diff::shift(diff::tanh(wv), 1.0), 0.5);
  const Var dist = diff::squared_l2_norm(diff::sub(adv, g.constant(x)));
  const Var z = ev.fn()(g, adv);
  ev.check_logits(z);
  const std::size_t k = z.value().size(), y = ev.label();
  if (k < 2) throw std::invalid_argument("cw_attack: scorer must return at least 2 logits");
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < k; ++i)
    if (i != y) others.push_back(i);
  const Var margin = diff::sub(diff::select(z, y),
                               diff::max_over_axis(diff::gather(z, others, {k - 1})));
  const Var hinge = diff::shift(diff::relu(diff::shift(margin, cfg.kappa)), -cfg.kappa);
  const Var obj = diff::add(dist, diff::scale(hinge, cfg.c));
  CwEval out;
  out.objective = obj.value().item();
  if (!std::isfinite(out.objective)) {
    throw AttackAborted(step, "attack: loss is not finite at step " + std::to_string(step));
  }
  out.adv = adv.value();
  out.logits = z.value().storage();
  if (need_grad) {
    g.backward(obj);
    out.grad_w = g.grad(wv);
  }
  return out;
}

}  // namespace

AttackResult cw_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg) {
  if (cfg.method != Method::kCw) throw std::invalid_argument("cw_attack: method is not cw");
  cfg.validate();
  check_input(x);
  Evaluator ev(scorer);
  const Box unit = feasible_box(x, 1.0);
  const double lr = *cfg.step_size;

  Tensor w(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = std::atanh((2.0 * x[i] - 1.0) * kTanhShrink);

  AttackResult r;
  // Best-seen bookkeeping over float32-quantized iterates.
  bool have_success = false;
  double best_success_norm = std::numeric_limits<double>::infinity();
  Tensor best_success, best_fallback;
  double best_fallback_obj = std::numeric_limits<double>::infinity();

  auto consider = [&](const CwEval& e) {
    if (e.objective < best_fallback_obj) {
      best_fallback_obj = e.objective;
      best_fallback = e.adv;
    }
    if (argmax(e.logits) == ev.label()) return;
    const Tensor q = project(e.adv, unit);
    double n2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) n2 += (q[i] - x[i]) * (q[i] - x[i]);
    if (n2 >= best_success_norm) return;
    if (argmax(ev.logits(q)) == ev.label()) return;  // flipped back by quantization
    have_success = true;
    best_success_norm = n2;
    best_success = q;
  };

  CwEval e = cw_evaluate(ev, w, x, cfg, true, 0);
  r.initial_loss = e.objective;
  r.best_objective = e.objective;
  consider(e);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * e.grad_w[i];
    e = cw_evaluate(ev, w, x, cfg, t < cfg.steps, t);
    r.loss_trajectory.push_back(e.objective);
    r.best_objective = std::min(r.best_objective, e.objective);
    consider(e);
  }

  const Tensor chosen = have_success ? best_success : project(best_fallback, unit);
  finalize(r, x, chosen, ev);
  double dist = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dist += r.delta[i] * r.delta[i];
  r.returned_objective = dist + cfg.c * cw_margin_loss(ev.logits(r.adv_image), ev.label(), cfg.kappa);
  return r;
}

AttackResult run_attack(const ScorerGraph& scorer, const Tensor& x, const AttackConfig& cfg) {
  switch (cfg.method) {
    case Method::kPgd: return pgd_attack(scorer, x, cfg);
    case Method::kApgd: return apgd_attack(scorer, x, cfg);
    case Method::kCw: return cw_attack(scorer, x, cfg);
  }
  throw std::invalid_argument("run_attack: unknown method");
}

BatchResult run_attack_batch(const ScorerFactory& factory, const std::vector<std::string>& ids,
                             const std::vector<Tensor>& images, const AttackConfig& cfg,
                             std::size_t parallelism) {
  if (ids.size() != images.size()) {
    throw std::invalid_argument("run_attack_batch: ids and images differ in length");
  }
  cfg.validate();
  BatchResult out;
  out.items.resize(images.size());
  parallel_for(images.size(), parallelism, [&](std::size_t i) {
    auto& item = out.items[i];
    item.id = ids[i];
    const ScorerGraph scorer = factory(i);
    item.clean_correct = argmax(scorer.logits(images[i])) == scorer.label;
    item.adv_correct = item.clean_correct;
    try {
      item.result = run_attack(scorer, images[i], cfg);
      item.adv_correct = !item.result->success;
    } catch (const std::exception& e) {
      item.error = e.what();
    }
  });

  auto& s = out.summary;
  s.count = out.items.size();
  std::size_t pre = 0, post = 0, attacked = 0;
  for (const auto& item : out.items) {
    pre += item.clean_correct ? 1 : 0;
    post += item.adv_correct ? 1 : 0;
    if (!item.result) {
      ++s.aborted;
      continue;
    }
    ++attacked;
    s.mean_linf += item.result->linf_norm;
    s.mean_l2 += item.result->l2_norm;
  }
  if (s.count > 0) {
    s.pre_accuracy = 100.0 * static_cast<double>(pre) / static_cast<double>(s.count);
    s.post_accuracy = 100.0 * static_cast<double>(post) / static_cast<double>(s.count);
  }
  if (attacked > 0) {
    s.mean_linf /= static_cast<double>(attacked);
    s.mean_l2 /= static_cast<double>(attacked);
  }
  return out;
}

void write_batch(const std::filesystem::path& dir, const BatchResult& batch,
                 const AttackConfig& cfg, const std::string& task) {
  using nlohmann::json;
  std::filesystem::create_directories(dir / "adv");
  json samples = json::array();
  for (const auto& item : batch.items) {
    json rec{{"id", item.id},
             {"method", to_string(cfg.method)},
             {"setting", to_string(cfg.setting)},
             {"clean_correct", item.clean_correct},
             {"adv_correct", item.adv_correct}};
    if (item.result) {
      const auto& r = *item.result;
      const auto file = "adv/" + item.id + ".imgf32";
      write_imgf32(dir / file, r.adv_image);
      rec["file"] = file;
      rec["linf"] = r.linf_norm;
      rec["l2"] = r.l2_norm;
      rec["success"] = r.success;
      rec["loss_first"] = r.initial_loss;
      rec["loss_last"] = r.loss_trajectory.empty() ? r.initial_loss : r.loss_trajectory.back();
      rec["loss_best"] = r.best_objective;
    } else {
      rec["error"] = item.error;
    }
    samples.push_back(std::move(rec));
  }
  json config{{"method", to_string(cfg.method)},
              {"setting", to_string(cfg.setting)},
              {"steps", cfg.steps},
              {"norm", cfg.norm == Norm::kLinf ? "linf" : "l2"},
              {"seed", cfg.seed}};
  if (cfg.step_size) config["step_size"] = *cfg.step_size;
  if (cfg.method == Method::kCw) {
    config["c"] = cfg.c;
    config["kappa"] = cfg.kappa;
  } else {
    config["epsilon"] = cfg.epsilon;
  }
  const auto& s = batch.summary;
  const json doc{{"format", "vlwb-attack-results"},
                 {"version", 1},
                 {"task", task},
                 {"config", std::move(config)},
                 {"summary",
                  {{"count", s.count},
                   {"aborted", s.aborted},
                   {"pre_accuracy", s.pre_accuracy},
                   {"post_accuracy", s.post_accuracy},
                   {"mean_linf", s.mean_linf},
                   {"mean_l2", s.mean_l2}}},
                 {"samples", std::move(samples)}};
  write_text_file(dir / "results.json", doc.dump(2) + "\n");
}

}  // namespace vlwb::attacks
