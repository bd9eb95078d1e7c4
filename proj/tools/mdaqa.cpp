// mdaqa: generate synthetic corpora, train on the source domain, adapt to an
// unlabelled target domain, evaluate, and run parameter sweeps.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdaqa/checkpoint.hpp"
#include "mdaqa/config_io.hpp"
#include "mdaqa/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mdaqa;

namespace {

fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Accepts a bare run config or a provenance file written by any command.
RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("--config " + path + ": " + e.what());
  }
  if (j.contains("run_config")) j = j.at("run_config");
  try {
    return run_config_from_json(j, cfg);
  } catch (const ConfigError& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
}

void write_provenance(const fs::path& path, const std::string& command, const json& args,
                      const RunConfig& cfg) {
  json j;
  j["command"] = command;
  j["args"] = args;
  j["run_config"] = to_json_value(cfg);
  write_text_file(path, j.dump(2) + "\n");
}

void write_csv(const fs::path& path, const auto& writer) {
  std::ostringstream os;
  writer(os);
  write_text_file(path, os.str());
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "run config JSON (partial overrides allowed)");
    cmd->add_option("--seed", seed, "master seed");
  }
  RunConfig load() const {
    RunConfig cfg = load_run_config(config);
    if (seed) cfg.seed = *seed;
    return cfg;
  }
};

void require_unit_interval(double v, const char* flag, bool open) {
  const bool ok = open ? (v > 0.0 && v < 1.0) : (v >= 0.0 && v <= 1.0);
  if (!ok) {
    throw UsageError(std::string(flag) + " must lie in " + (open ? "(0,1)" : "[0,1]") + ", got " +
                     std::to_string(v));
  }
}

void print_metrics(const char* label, const MetricsReport& r) {
  std::printf("%s EM %.2f F1 %.2f (n=%zu)\n", label, r.em, r.f1, r.n);
}

// gen-data ------------------------------------------------------------------

struct GenData {
  Common common;
  std::string domain;
  std::optional<double> shift;
  std::size_t n = 0;
  std::string out;

  void run() const {
    RunConfig cfg = common.load();
    const bool target = domain == "target";
    const double s = shift.value_or(target ? cfg.target_shift : 0.0);
    require_unit_interval(s, "--shift", false);
    if (n < 1) throw UsageError("--n must be at least 1");

    DomainSpec spec = cfg.domain;
    spec.shift = s;
    spec.seed = cfg.seed;
    const auto corpus = generate_corpus(spec, n);
    const fs::path path(out);
    if (target) {
      write_jsonl(strip_labels(corpus), path);
      write_jsonl(corpus, sibling(path, ".gold.jsonl"));
    } else {
      write_jsonl(corpus, path);
    }
    cfg.domain = spec;
    write_provenance(sibling(path, ".config.json"), "gen-data",
                     {{"domain", domain}, {"shift", s}, {"n", n}, {"seed", cfg.seed}, {"out", out}},
                     cfg);
    std::printf("wrote %zu %s samples to %s\n", n, domain.c_str(), out.c_str());
  }
};

// train-source ----------------------------------------------------------------

struct TrainSource {
  Common common;
  std::string train;
  std::string dev;
  std::string out;
  bool no_mask = false;

  void run() const {
    RunConfig cfg = common.load();
    if (no_mask) cfg.no_mask = true;
    cfg = resolve(cfg);

    const auto train_set = read_jsonl(fs::path(train));
    const fs::path ckpt_path(out);
    std::vector<QASample> dev_set;
    std::string dev_path = dev;
    if (dev.empty()) {
      dev_set = generate_corpus(source_spec(cfg, "source.dev"), cfg.n_source_dev);
      dev_path = sibling(ckpt_path, ".dev.jsonl").string();
      write_jsonl(dev_set, fs::path(dev_path));
    } else {
      dev_set = read_jsonl(fs::path(dev));
    }

    QaModel model(cfg.model, cfg.seed);
    const SourceTrainingResult r = train_source(model, train_set, cfg.source);
    save_checkpoint(ckpt_path, Checkpoint::capture(model, r.snapshot, cfg.source));
    write_csv(sibling(ckpt_path, ".train_log.csv"),
              [&](std::ostream& os) { write_training_log_csv(r.log, os); });
    write_provenance(sibling(ckpt_path, ".config.json"), "train-source",
                     {{"train", train}, {"dev", dev_path}, {"out", out}, {"no_mask", cfg.no_mask}},
                     cfg);

    if (!r.log.empty()) {
      const auto& last = r.log.back();
      std::printf("epoch %zu loss %.6f active_fraction %.4f\n", last.epoch, last.mean.total,
                  last.active_fraction);
    }
    print_metrics("source dev", evaluate(model, dev_set));
  }
};

// adapt ------------------------------------------------------------------------

struct Adapt {
  Common common;
  std::string model;
  std::string target;
  std::optional<double> alpha;
  std::optional<std::size_t> rounds;
  std::string out;
  bool no_mask = false;

  void run() const {
    RunConfig cfg = common.load();
    if (alpha) cfg.adapt.alpha = *alpha;
    if (rounds) cfg.adapt.rounds = *rounds;
    require_unit_interval(cfg.adapt.alpha, "--alpha", true);
    if (cfg.adapt.rounds < 1) throw UsageError("--rounds must be at least 1");
    cfg.no_mask = no_mask;
    cfg = resolve(cfg);

    const Checkpoint ckpt = load_checkpoint(fs::path(model));
    if (no_mask && ckpt.model.mask.enabled) {
      throw UsageError("--no-mask needs a checkpoint trained with --no-mask");
    }
    if (!no_mask && !ckpt.snapshot) {
      throw PreconditionError("checkpoint has no mask snapshot; pass --no-mask for an ablation model");
    }
    QaModel m = ckpt.restore();
    const auto targets = read_jsonl(fs::path(target));
    const auto log = adapt(m, ckpt.snapshot ? &*ckpt.snapshot : nullptr, targets, cfg.adapt);

    const fs::path out_path(out);
    save_checkpoint(out_path, Checkpoint::capture(m, ckpt.snapshot, ckpt.optimizer));
    write_csv(sibling(out_path, ".rounds.csv"), [&](std::ostream& os) { write_round_log_csv(log, os); });
    write_provenance(sibling(out_path, ".config.json"), "adapt",
                     {{"model", model}, {"target", target}, {"out", out}, {"no_mask", no_mask}},
                     cfg);
    for (const auto& r : log) {
      std::printf("round %zu pseudo %zu qualified %.4f%s\n", r.round, r.n_pseudo,
                  r.qualified_fraction, r.skipped ? " (skipped)" : "");
    }
  }
};

// eval ---------------------------------------------------------------------------

struct Eval {
  Common common;
  std::string model;
  std::string data;
  std::string out;

  void run() const {
    const RunConfig cfg = common.load();
    const Checkpoint ckpt = load_checkpoint(fs::path(model));
    const QaModel m = ckpt.restore();
    const auto samples = read_jsonl(fs::path(data));
    const MetricsReport report = evaluate(m, samples);

    const fs::path out_path(out);
    write_metrics_csv(report, out_path);
    write_text_file(sibling(out_path, ".json"), metrics_json(report) + "\n");
    write_provenance(sibling(out_path, ".config.json"), "eval",
                     {{"model", model}, {"data", data}, {"out", out}}, cfg);
    print_metrics("eval", report);
  }
};

// sweep -------------------------------------------------------------------------

struct Sweep {
  Common common;
  std::string param;
  std::string values;
  std::size_t repeats = 3;
  std::string out;
  bool no_mask = false;

  std::vector<double> parse_values() const {
    std::vector<double> v;
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw UsageError("--values: not a number: '" + item + "'");
      }
    }
    if (v.empty()) throw UsageError("--values is empty");
    for (const double x : v) {
      if (param == "alpha") {
        require_unit_interval(x, "--values (alpha)", true);
      } else if (!(x >= 1.0) || x != std::floor(x)) {
        throw UsageError("--values (nsamples) must be positive integers");
      }
    }
    return v;
  }

  int run() const {
    RunConfig cfg = common.load();
    if (no_mask) cfg.no_mask = true;
    if (repeats < 1) throw UsageError("--repeats must be at least 1");
    const auto vals = parse_values();
    const SweepParam p = param == "alpha" ? SweepParam::kAlpha : SweepParam::kNSamples;

    const SweepResult result = run_sweep(cfg, p, vals, repeats);
    const fs::path prefix(out);
    const fs::path csv = prefix.parent_path() / (prefix.filename().string() + ".csv");
    const fs::path svg = prefix.parent_path() / (prefix.filename().string() + ".svg");
    write_csv(csv, [&](std::ostream& os) { write_sweep_csv(result, os); });
    write_text_file(svg, sweep_svg(result));
    write_provenance(prefix.parent_path() / (prefix.filename().string() + ".config.json"), "sweep",
                     {{"param", param}, {"values", vals}, {"repeats", repeats}, {"out", out},
                      {"no_mask", cfg.no_mask}},
                     resolve(cfg));
    for (const auto& pt : result.means()) {
      std::printf("%s %g EM %.2f F1 %.2f\n", param.c_str(), pt.value, pt.em, pt.f1);
    }
    if (result.failures() > 0) {
      std::fprintf(stderr, "error: %zu of %zu runs failed (see %s)\n", result.failures(),
                   result.rows.size(), csv.string().c_str());
      return 1;
    }
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free domain adaptation for extractive QA on synthetic corpora"};
  app.require_subcommand(1);

  GenData gen;
  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic JSONL corpus");
  gen.common.add(c_gen);
  c_gen->add_option("--domain", gen.domain, "source or target")
      ->required()
      ->check(CLI::IsMember({"source", "target"}));
  c_gen->add_option("--shift", gen.shift, "domain shift in [0,1]");
  c_gen->add_option("--n", gen.n, "number of samples")->required();
  c_gen->add_option("--out", gen.out, "output JSONL path")->required();

  TrainSource ts;
  auto* c_train = app.add_subcommand("train-source", "train on a labelled source corpus");
  ts.common.add(c_train);
  c_train->add_option("--train", ts.train, "labelled JSONL")->required();
  c_train->add_option("--dev", ts.dev, "labelled dev JSONL (generated when omitted)");
  c_train->add_option("--out", ts.out, "checkpoint path")->required();
  c_train->add_flag("--no-mask", ts.no_mask, "train the ablation without the mask module");

  Adapt ad;
  auto* c_adapt = app.add_subcommand("adapt", "self-train on unlabelled target samples");
  ad.common.add(c_adapt);
  c_adapt->add_option("--model", ad.model, "source checkpoint")->required();
  c_adapt->add_option("--target", ad.target, "unlabelled target JSONL")->required();
  c_adapt->add_option("--alpha", ad.alpha, "confidence threshold in (0,1)");
  c_adapt->add_option("--rounds", ad.rounds, "self-training rounds");
  c_adapt->add_option("--out", ad.out, "adapted checkpoint path")->required();
  c_adapt->add_flag("--no-mask", ad.no_mask, "adapt an ablation checkpoint without gating");

  Eval ev;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint on labelled data");
  ev.common.add(c_eval);
  c_eval->add_option("--model", ev.model, "checkpoint")->required();
  c_eval->add_option("--data", ev.data, "labelled JSONL (the .gold.jsonl twin for targets)")->required();
  c_eval->add_option("--out", ev.out, "per-sample CSV path")->required();

  Sweep sw;
  auto* c_sweep = app.add_subcommand("sweep", "sweep alpha or the number of target samples");
  sw.common.add(c_sweep);
  c_sweep->add_option("--param", sw.param, "alpha or nsamples")
      ->required()
      ->check(CLI::IsMember({"alpha", "nsamples"}));
  c_sweep->add_option("--values", sw.values, "comma-separated values")->required();
  c_sweep->add_option("--repeats", sw.repeats, "seeds per value");
  c_sweep->add_option("--out", sw.out, "output prefix for .csv/.svg")->required();
  c_sweep->add_flag("--no-mask", sw.no_mask, "sweep the ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) gen.run();
    if (*c_train) ts.run();
    if (*c_adapt) ad.run();
    if (*c_eval) ev.run();
    if (*c_sweep) return sw.run();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
