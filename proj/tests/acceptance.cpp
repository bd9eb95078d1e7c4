// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "mdaqa/checkpoint.hpp"
#include "mdaqa/experiment.hpp"
#include "mdaqa/metrics.hpp"
#include "support.hpp"

using namespace mdaqa;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Source stages are expensive; every criterion that needs one shares it.
struct Run {
  RunConfig cfg;
  std::shared_ptr<const ExperimentData> data;
  SourceStage stage;
};

class StageCache {
 public:
  const Run& get(std::uint64_t seed, bool no_mask) {
    const auto key = std::make_pair(seed, no_mask);
    if (auto it = runs_.find(key); it != runs_.end()) return *it->second;
    RunConfig cfg;
    cfg.seed = seed;
    cfg.no_mask = no_mask;
    cfg = resolve(cfg);
    auto& data = data_[seed];
    if (!data) data = std::make_shared<const ExperimentData>(make_data(cfg));
    auto run = std::make_unique<Run>(Run{cfg, data, run_source_stage(cfg, *data)});
    std::printf("  [source stage seed %llu%s: dev EM %.1f]\n", static_cast<unsigned long long>(seed),
                no_mask ? " no-mask" : "", run->stage.source_dev.em);
    std::fflush(stdout);
    return *runs_.emplace(key, std::move(run)).first->second;
  }

 private:
  std::map<std::pair<std::uint64_t, bool>, std::unique_ptr<Run>> runs_;
  std::map<std::uint64_t, std::shared_ptr<const ExperimentData>> data_;
};

StageCache& cache() {
  static StageCache c;
  return c;
}

AdaptStage adapt_run(std::uint64_t seed, bool no_mask, double alpha, std::size_t n_target) {
  const Run& r = cache().get(seed, no_mask);
  RunConfig cfg = r.cfg;
  cfg.adapt.alpha = alpha;
  cfg.n_target = n_target;
  return run_adapt_stage(cfg, r.stage, *r.data);
}

Outcome gradients() {
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  std::string where;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto r = testing::gradient_instance(i, 1);
    checked += r.checked;
    failed += r.failed;
    if (r.worst_abs > worst) worst = r.worst_abs, where = r.worst_tensor;
  }
  return {failed == 0, fmt("50 instances, %zu entries, %zu outside tolerance%s", checked, failed,
                           where.empty() ? "" : (" (worst in " + where + ")").c_str())};
}

Outcome gating() {
  QaModel model(testing::tiny_model_config(), 31);
  SeededRng rng(32);
  testing::randomize(model, rng, 0.5);
  const QASample s = testing::random_sample(rng, 24, 9, 3);
  const ModelGrads g = testing::sample_grads(model, s, 0.75);
  MaskSnapshot snap;
  snap.values = RealVector(6);
  snap.values << 1.0, 0.0, 0.37, 1.0, 0.999, 0.5;

  const QaModel before = model;
  const double lr = 0.5;
  apply_updates(model, g, lr, 0.02, &snap);
  const auto& m0 = before.mask().params();
  const auto& m1 = model.mask().params();
  double worst = 0.0;
  bool frozen_exact = true;
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double keep = 1.0 - snap.values(i);
    for (Eigen::Index j = 0; j < m0.bottleneck_weight.cols(); ++j) {
      const double d = m1.bottleneck_weight(i, j) - m0.bottleneck_weight(i, j);
      worst = std::max(worst, std::abs(d + lr * keep * g.mask.bottleneck_weight(i, j)));
    }
    for (Eigen::Index r = 0; r < 2; ++r) {
      const double d = m1.head_weight(r, i) - m0.head_weight(r, i);
      worst = std::max(worst, std::abs(d + lr * keep * g.mask.head_weight(r, i)));
    }
    if (snap.values(i) == 1.0) {
      frozen_exact = frozen_exact && m1.bottleneck_weight.row(i) == m0.bottleneck_weight.row(i) &&
                     m1.bottleneck_bias(i) == m0.bottleneck_bias(i) &&
                     m1.head_weight.col(i) == m0.head_weight.col(i);
    }
  }
  return {worst <= 1e-12 && frozen_exact,
          fmt("max deviation %.3g, kernels with M_s=1 %s", worst,
              frozen_exact ? "bit-unchanged" : "CHANGED")};
}

Outcome near_binary() {
  const Run& r = cache().get(1, false);
  const RealVector& m = r.stage.snapshot->values;
  const auto near = (m.array() < 0.05 || m.array() > 0.95).count();
  const double near_frac = static_cast<double>(near) / static_cast<double>(m.size());
  const double active = active_fraction(m);

  RunConfig control = r.cfg;
  control.source.lambda = 0.0;
  const SourceStage c = run_source_stage(control, *r.data);
  const double control_active = active_fraction(c.snapshot->values);
  return {near_frac >= 0.9 && active < 0.8 && control_active > active,
          fmt("%.1f%% near {0,1}, active %.3f, lambda=0 control active %.3f", 100 * near_frac,
              active, control_active)};
}

Outcome decoding() {
  const DomainSpec spec = default_domain_spec(0.6, 77);
  const auto samples = generate_corpus(spec, 1000);
  QaModel trained = cache().get(1, false).stage.model;
  QaModel flat = trained;
  // Constant logits make every admissible pair tie.
  flat.mask().params().head_weight.setZero();
  flat.mask().params().head_bias.setZero();
  QaModel fresh(testing::default_model_for(spec), 5);

  std::size_t mismatches = 0, ties = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const QaModel& m = i % 4 == 0 ? flat : (i % 4 == 1 ? fresh : trained);
    const auto got = predict_span(m, samples[i]);
    const auto [ps, pe] = m.span_probabilities(samples[i]);
    const auto want = testing::brute_force_span(ps, pe, m.config().max_answer_len);
    if (!(got.span == want.span) || got.score != want.score) ++mismatches;
    if (i % 4 == 0) ties += want.span == SpanLabel{0, 0} ? 1 : 0;
  }
  return {mismatches == 0 && ties == 250,
          fmt("1000 draws (250 all-tie), %zu mismatches", mismatches)};
}

Outcome metric_fixtures() {
  bool ok = std::abs(token_f1({1, 2}, {0, 1}) - 0.5) < 1e-15 && token_f1({3, 7}, {3, 7}) == 1.0 &&
            exact_match({3, 7}, {3, 7}) == 1 && token_f1({0, 1}, {4, 5}) == 0.0 &&
            std::abs(token_f1({3, 3}, {3, 5}) - 0.5) < 1e-15;
  SeededRng rng(5);
  std::size_t violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = static_cast<std::size_t>(rng.below(16));
    const auto b = static_cast<std::size_t>(rng.below(16));
    const SpanLabel p{a, a + static_cast<std::size_t>(rng.below(5))};
    const SpanLabel g{b, b + static_cast<std::size_t>(rng.below(5))};
    if (exact_match(p, g) > token_f1(p, g)) ++violations;
  }
  return {ok && violations == 0, fmt("fixtures %s, em<=f1 violations %zu / 1000",
                                     ok ? "ok" : "WRONG", violations)};
}

Outcome adaptation_gain() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const AdaptStage st = adapt_run(seed, false, 0.6, 1000);
    const double gain = st.after.em - st.before.em;
    ok = ok && gain >= 5.0;
    detail += fmt("seed %llu %.1f->%.1f (%+.1f) ", static_cast<unsigned long long>(seed),
                  st.before.em, st.after.em, gain);
  }
  return {ok, detail};
}

Outcome ablation() {
  double sum_full = 0.0, sum_abl = 0.0;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double full = adapt_run(seed, false, 0.6, 1000).after.em;
    const double abl = adapt_run(seed, true, 0.6, 1000).after.em;
    sum_full += full;
    sum_abl += abl;
    wins += full > abl ? 1 : 0;
    detail += fmt("%.1f/%.1f ", full, abl);
  }
  return {sum_full > sum_abl && wins >= 4,
          fmt("mean EM %.2f vs %.2f, wins %d/5; per seed full/ablation: ", sum_full / 5,
              sum_abl / 5, wins) +
              detail};
}

Outcome threshold_trend() {
  const std::vector<double> alphas{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> mean(alphas.size(), 0.0);
  bool qf_ok = true;
  std::string qf_detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      const AdaptStage st = adapt_run(seed, false, alphas[k], 1000);
      mean[k] += st.after.em / 3.0;
      if (alphas[k] != 0.5) continue;
      for (std::size_t r = 1; r < st.rounds.size(); ++r) {
        qf_ok = qf_ok && st.rounds[r].qualified_fraction >= st.rounds[r - 1].qualified_fraction;
      }
      if (seed == 1) {
        for (const auto& r : st.rounds) qf_detail += fmt("%.3f ", r.qualified_fraction);
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  std::string curve;
  for (std::size_t k = 0; k < alphas.size(); ++k) curve += fmt("%.1f:%.2f ", alphas[k], mean[k]);
  return {best != 0 && best + 1 != alphas.size() && qf_ok,
          "mean EM " + curve + fmt("argmax %.1f; qualified fraction at 0.5 (seed 1) ",
                                   alphas[best]) +
              qf_detail + (qf_ok ? "non-decreasing on all seeds" : "DECREASES on some seed")};
}

Outcome data_size_trend() {
  const std::vector<std::size_t> sizes{10, 100, 1000};
  std::vector<double> mean(sizes.size(), 0.0);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      mean[k] += adapt_run(seed, false, 0.6, sizes[k]).after.em / 3.0;
    }
  }
  bool ok = true;
  for (std::size_t k = 1; k < mean.size(); ++k) ok = ok && mean[k] >= mean[k - 1];
  return {ok, fmt("mean EM n'=10: %.2f, 100: %.2f, 1000: %.2f", mean[0], mean[1], mean[2])};
}

Outcome determinism_and_formats() {
  RunConfig cfg;
  cfg.n_source_train = 200;
  cfg.n_source_dev = 50;
  cfg.n_target = 100;
  cfg.n_target_test = 100;
  cfg.source.epochs = 3;
  cfg.adapt.rounds = 2;
  cfg = resolve(cfg);
  auto produce = [&] {
    const ExperimentData data = make_data(cfg);
    const SourceStage st = run_source_stage(cfg, data);
    std::ostringstream csv;
    write_training_log_csv(st.log, csv);
    write_metrics_csv(st.source_dev, csv);
    const AdaptStage ad = run_adapt_stage(cfg, st, data);
    write_round_log_csv(ad.rounds, csv);
    write_metrics_csv(ad.after, csv);
    return std::make_pair(checkpoint_to_json(Checkpoint::capture(st.model, st.snapshot, cfg.source)),
                          csv.str());
  };
  const auto a = produce();
  const auto b = produce();
  const bool repeat_ok = a == b;

  const Checkpoint back = checkpoint_from_json(a.first);
  const bool ckpt_ok = checkpoint_to_json(back) == a.first;

  const auto corpus = generate_corpus(default_domain_spec(0.6, 3), 200);
  std::stringstream ss;
  write_jsonl(corpus, ss);
  const bool jsonl_ok = read_jsonl(ss) == corpus;

  testing::CliRunner cli("acceptance");
  cli.write("small.json", testing::kSmallRunConfig);
  std::vector<std::pair<std::string, int>> cases{
      {"gen-data --config small.json --domain source --n 40 --out s.jsonl", 0},
      {"gen-data --config small.json --domain target --n 40 --out t.jsonl", 0},
      {"train-source --config small.json --train s.jsonl --out m.json", 0},
      {"adapt --config small.json --model m.json --target t.jsonl --out a.json", 0},
      {"eval --model a.json --data t.gold.jsonl --out e.csv", 0},
      {"eval --model a.json --data t.jsonl --out e.csv", 1},
      {"eval --model nothing.json --data t.gold.jsonl --out e.csv", 1},
      {"adapt --model m.json --target t.jsonl --alpha 1.5 --out a.json", 2},
      {"gen-data --domain target --shift -1 --n 5 --out x.jsonl", 2},
      {"train-source --bogus", 2},
  };
  std::size_t cli_bad = 0;
  std::string cli_detail;
  for (const auto& [args, want] : cases) {
    const int got = cli.run(args);
    if (got != want) {
      ++cli_bad;
      cli_detail += fmt(" [%s -> %d, want %d]", args.c_str(), got, want);
    }
  }
  return {repeat_ok && ckpt_ok && jsonl_ok && cli_bad == 0,
          fmt("repeat runs %s, checkpoint round trip %s, jsonl round trip %s, cli %zu/%zu",
              repeat_ok ? "identical" : "DIFFER", ckpt_ok ? "exact" : "INEXACT",
              jsonl_ok ? "exact" : "INEXACT", cases.size() - cli_bad, cases.size()) +
              cli_detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0: no budget of its own
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 30, gradients},
      {2, "gating exactness", 1, gating},
      {3, "mask near-binarity", 0, near_binary},
      {4, "span decoding oracle", 10, decoding},
      {5, "metric correctness", 5, metric_fixtures},
      {6, "adaptation improves over no adaptation", 0, adaptation_gain},
      {7, "ablation direction", 0, ablation},
      {8, "threshold trend", 0, threshold_trend},
      {9, "data-size trend", 0, data_size_trend},
      {10, "determinism and formats", 0, determinism_and_formats},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" (over the %.0f s budget)", c.budget_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d %s: %s [%.1f s] %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
