#include <doctest.h>

#include <cmath>
#include <limits>

#include "vlwb/attacks.hpp"
#include "vlwb/rng.hpp"

using namespace vlwb;
using namespace vlwb::attacks;

namespace {

struct Instance {
  ScorerGraph scorer;
  Tensor x;
};

Instance random_instance(std::uint64_t seed, std::size_t classes, std::size_t pixels = 8) {
  Rng rng(seed);
  Tensor w({classes, pixels});
  for (double& v : w.values()) v = rng.normal() * 3.0;
  std::vector<double> b(classes);
  for (double& v : b) v = rng.normal() * 0.1;
  Tensor x({pixels, 1, 1});
  // Some pixels sit on the box edges so clipping is exercised.
  for (double& v : x.values()) {
    const double u = rng.uniform();
    v = u < 0.15 ? 0.0 : u > 0.85 ? 1.0 : rng.uniform();
  }
  return {linear_scorer(w, b, rng.below(classes)), x};
}

double max_abs_delta(const AttackResult& r) {
  double m = 0.0;
  for (double v : r.delta.values()) m = std::max(m, std::abs(v));
  return m;
}

bool in_unit_box(const Tensor& t) {
  for (double v : t.values())
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

}  // namespace

TEST_CASE("presets carry the fixed step, bound and budget values") {
  const auto pn = preset(Method::kPgd, Setting::kNormal);
  CHECK(pn.steps == 20);
  CHECK(*pn.step_size == doctest::Approx(2.0 / 255.0));
  CHECK(pn.epsilon == doctest::Approx(8.0 / 255.0));
  const auto ps = preset(Method::kPgd, Setting::kStrong);
  CHECK(ps.steps == 40);
  CHECK(ps.epsilon == doctest::Approx(0.2));
  const auto an = preset(Method::kApgd, Setting::kNormal);
  CHECK(an.steps == 20);
  CHECK_FALSE(an.step_size.has_value());
  const auto cn = preset(Method::kCw, Setting::kNormal);
  CHECK(cn.steps == 50);
  CHECK(cn.c == 20.0);
  CHECK(*cn.step_size == 0.01);
  const auto cs = preset(Method::kCw, Setting::kStrong);
  CHECK(cs.steps == 75);
  CHECK(cs.c == 100.0);
  CHECK(*cs.step_size == 0.05);
  CHECK(cs.norm == Norm::kL2);
}

TEST_CASE("method and setting names parse in any case and reject others") {
  CHECK(parse_method("PGD") == Method::kPgd);
  CHECK(parse_method("apgd") == Method::kApgd);
  CHECK(parse_method("Cw") == Method::kCw);
  CHECK(parse_setting("STRONG") == Setting::kStrong);
  CHECK_THROWS_AS(parse_method("fgsm"), std::invalid_argument);
  CHECK_THROWS_AS(parse_setting("medium"), std::invalid_argument);
}

TEST_CASE("config validation names the offending field") {
  auto apgd = preset(Method::kApgd, Setting::kNormal);
  apgd.step_size = 0.1;
  CHECK_THROWS_AS(apgd.validate(), std::invalid_argument);
  auto cw = preset(Method::kCw, Setting::kNormal);
  cw.c = 0.0;
  CHECK_THROWS_AS(cw.validate(), std::invalid_argument);
  auto pgd = preset(Method::kPgd, Setting::kNormal);
  pgd.steps = 0;
  CHECK_THROWS_AS(pgd.validate(), std::invalid_argument);
  pgd = preset(Method::kPgd, Setting::kNormal);
  pgd.epsilon = -1.0;
  CHECK_THROWS_AS(pgd.validate(), std::invalid_argument);
}

TEST_CASE("PGD and APGD stay inside the epsilon ball and the pixel box") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = random_instance(seed, 2 + seed % 3);
    for (const auto s : {Setting::kNormal, Setting::kStrong}) {
      for (const auto m : {Method::kPgd, Method::kApgd}) {
        const auto cfg = preset(m, s);
        const auto r = run_attack(inst.scorer, inst.x, cfg);
        CHECK(max_abs_delta(r) <= cfg.epsilon + 1e-9);
        CHECK(r.linf_norm == doctest::Approx(max_abs_delta(r)));
        CHECK(in_unit_box(r.adv_image));
        CHECK(r.loss_trajectory.size() == cfg.steps);
      }
    }
  }
}

TEST_CASE("PGD on a binary linear scorer reaches the brute-force corner optimum") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    const auto inst = random_instance(seed, 2);
    const auto cfg = preset(Method::kPgd, Setting::kNormal);
    const auto r = pgd_attack(inst.scorer, inst.x, cfg);
    const std::size_t n = inst.x.size();
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      Tensor c = inst.x;
      for (std::size_t i = 0; i < n; ++i) {
        c[i] = (mask >> i & 1u) ? std::min(1.0, inst.x[i] + cfg.epsilon)
                                : std::max(0.0, inst.x[i] - cfg.epsilon);
      }
      best = std::max(best, cross_entropy(inst.scorer.logits(c), inst.scorer.label));
    }
    CHECK(r.returned_objective >= 0.999 * best);
  }
}

TEST_CASE("PGD on multi-class linear scorers ends no worse than it started") {
  for (std::uint64_t seed = 200; seed < 230; ++seed) {
    const auto inst = random_instance(seed, 4);
    const auto r = pgd_attack(inst.scorer, inst.x, preset(Method::kPgd, Setting::kNormal));
    CHECK(r.returned_objective >= r.initial_loss);
    CHECK(r.best_objective >= r.returned_objective);
  }
}

TEST_CASE("APGD checkpoints follow the shrinking-interval schedule") {
  // p0 = 0, p1 = 0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06).
  CHECK(apgd_checkpoints(20) == std::vector<std::size_t>{5, 9, 12, 14, 16, 18, 19, 20});
  const auto c40 = apgd_checkpoints(40);
  CHECK(c40.front() == 9);
  CHECK(c40.back() <= 40);
  for (std::size_t i = 1; i < c40.size(); ++i) CHECK(c40[i] > c40[i - 1]);
}

TEST_CASE("APGD step sizes never increase and the best point is returned") {
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    const auto inst = random_instance(seed, 3);
    const auto cfg = preset(Method::kApgd, Setting::kStrong);
    const auto r = apgd_attack(inst.scorer, inst.x, cfg);
    REQUIRE(r.step_sizes.size() == cfg.steps);
    CHECK(r.step_sizes.front() == doctest::Approx(2.0 * cfg.epsilon));
    for (std::size_t i = 1; i < r.step_sizes.size(); ++i) {
      CHECK(r.step_sizes[i] <= r.step_sizes[i - 1]);
    }
    CHECK(r.returned_objective >= r.initial_loss);
    CHECK(r.returned_objective == doctest::Approx(r.best_objective).epsilon(1e-6));
  }
}

TEST_CASE("CW stays in the pixel box and never returns a larger flip than needed") {
  for (std::uint64_t seed = 400; seed < 420; ++seed) {
    const auto inst = random_instance(seed, 3);
    const auto r = cw_attack(inst.scorer, inst.x, preset(Method::kCw, Setting::kStrong));
    CHECK(in_unit_box(r.adv_image));
    const auto logits = inst.scorer.logits(r.adv_image);
    CHECK(r.success == (argmax(logits) != inst.scorer.label));
  }
}

TEST_CASE("CW with c = 100 lands near the separating hyperplane") {
  // Unit-norm weight difference, margin m: the minimal L2 flip is exactly m.
  const std::size_t n = 4;
  Tensor w({2, n});
  const double u = 0.5;  // (0.5, 0.5, 0.5, 0.5) has unit norm
  for (std::size_t i = 0; i < n; ++i) w[i] = u;
  const double m = 0.08;
  Tensor x = Tensor::filled({n, 1, 1}, 0.5);
  const std::vector<double> b{m - u * 0.5 * n, 0.0};
  auto cfg = preset(Method::kCw, Setting::kStrong);
  cfg.steps = 2000;
  cfg.step_size = 1e-4;
  const auto r = cw_attack(linear_scorer(w, b, 0), x, cfg);
  REQUIRE(r.success);
  CHECK(r.l2_norm >= m - 1e-6);
  CHECK(r.l2_norm <= 1.10 * m);
}

TEST_CASE("loss helpers") {
  const std::vector<double> z{2.0, 1.0, 0.0};
  const double lse = std::log(std::exp(2.0) + std::exp(1.0) + 1.0);
  CHECK(cross_entropy(z, 1) == doctest::Approx(lse - 1.0));
  CHECK(cw_margin_loss(z, 0, 0.0) == doctest::Approx(1.0));
  CHECK(cw_margin_loss(z, 2, 0.5) == doctest::Approx(-0.5));
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  CHECK_THROWS(cross_entropy(z, 3));
}

TEST_CASE("batches are identical at 1 and 8 workers and record aborts") {
  std::vector<Instance> insts;
  std::vector<std::string> ids;
  std::vector<Tensor> images;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    insts.push_back(random_instance(500 + seed, 3));
    ids.push_back("s" + std::to_string(seed));
    images.push_back(insts.back().x);
  }
  const ScorerFactory factory = [&](std::size_t i) {
    if (i == 5) {
      Tensor w = Tensor::filled({3, 8}, std::nan(""));
      return linear_scorer(w, {0.0, 0.0, 0.0}, 0);
    }
    return insts[i].scorer;
  };
  for (const auto m : {Method::kPgd, Method::kApgd, Method::kCw}) {
    const auto cfg = preset(m, Setting::kNormal);
    const auto a = run_attack_batch(factory, ids, images, cfg, 1);
    const auto b = run_attack_batch(factory, ids, images, cfg, 8);
    CHECK(a.summary.aborted == 1);
    CHECK_FALSE(a.items[5].result.has_value());
    CHECK_FALSE(a.items[5].error.empty());
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i) {
      CHECK(a.items[i].id == b.items[i].id);
      CHECK(a.items[i].adv_correct == b.items[i].adv_correct);
      CHECK(a.items[i].result.has_value() == b.items[i].result.has_value());
      if (a.items[i].result) CHECK(bitwise_equal(a.items[i].result->delta, b.items[i].result->delta));
    }
    CHECK(a.summary.mean_l2 == b.summary.mean_l2);
  }
}
