#include "mdaqa/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mdaqa/config_io.hpp"

namespace mdaqa {

nlohmann::json to_json_value(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["target_shift"] = cfg.target_shift;
  j["n_source_train"] = cfg.n_source_train;
  j["n_source_dev"] = cfg.n_source_dev;
  j["n_target"] = cfg.n_target;
  j["n_target_test"] = cfg.n_target_test;
  j["no_mask"] = cfg.no_mask;
  j["domain"] = cfg.domain;
  j["model"] = cfg.model;
  j["source"] = cfg.source;
  j["adapt"] = cfg.adapt;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base) {
  try {
    auto take = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    // Nested records merge key by key over the base values.
    auto merge = [&j](const char* key, auto& field) {
      if (!j.contains(key)) return;
      nlohmann::json cur = field;
      cur.merge_patch(j.at(key));
      field = cur.get<std::decay_t<decltype(field)>>();
    };
    take("seed", base.seed);
    take("target_shift", base.target_shift);
    take("n_source_train", base.n_source_train);
    take("n_source_dev", base.n_source_dev);
    take("n_target", base.n_target);
    take("n_target_test", base.n_target_test);
    take("no_mask", base.no_mask);
    merge("domain", base.domain);
    merge("model", base.model);
    merge("source", base.source);
    merge("adapt", base.adapt);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return base;
}

RunConfig resolve(RunConfig cfg) {
  if (!(cfg.target_shift >= 0.0 && cfg.target_shift <= 1.0)) {
    throw ConfigError("run config: target_shift must lie in [0,1]");
  }
  cfg.source.seed = cfg.seed;
  cfg.adapt.seed = cfg.seed;
  cfg.model.mask.input_dim = cfg.model.encoder.output_dim;
  cfg.model.max_input_len = cfg.domain.max_input_len;
  if (cfg.no_mask) {
    cfg.model.mask.enabled = false;
    cfg.source.lambda = 0.0;
    cfg.adapt.lambda = 0.0;
  }
  return cfg;
}

namespace {

std::uint64_t split_seed(std::uint64_t seed, std::string_view split) {
  return SeededRng(seed).stream(split).next_u64() & 0xffffffffULL;
}

}  // namespace

DomainSpec source_spec(const RunConfig& cfg, std::string_view split) {
  DomainSpec s = cfg.domain;
  s.shift = 0.0;
  s.seed = split_seed(cfg.seed, split);
  return s;
}

DomainSpec target_spec(const RunConfig& cfg, std::string_view split) {
  DomainSpec s = cfg.domain;
  s.shift = cfg.target_shift;
  s.seed = split_seed(cfg.seed, split);
  return s;
}

ExperimentData make_data(const RunConfig& cfg) {
  ExperimentData d;
  d.source_train = generate_corpus(source_spec(cfg, "source.train"), cfg.n_source_train);
  d.source_dev = generate_corpus(source_spec(cfg, "source.dev"), cfg.n_source_dev);
  d.target_unlabelled =
      strip_labels(generate_corpus(target_spec(cfg, "target.adapt"), cfg.n_target));
  d.target_test = generate_corpus(target_spec(cfg, "target.test"), cfg.n_target_test);
  return d;
}

SourceStage run_source_stage(const RunConfig& cfg, const ExperimentData& data) {
  SourceStage st{QaModel(cfg.model, cfg.seed), std::nullopt, {}, {}};
  SourceTrainingResult r = train_source(st.model, data.source_train, cfg.source);
  st.snapshot = std::move(r.snapshot);
  st.log = std::move(r.log);
  st.source_dev = evaluate(st.model, data.source_dev);
  return st;
}

AdaptStage run_adapt_stage(const RunConfig& cfg, const SourceStage& source,
                           const ExperimentData& data) {
  AdaptStage st;
  st.before = evaluate(source.model, data.target_test);
  QaModel model = source.model;
  const std::size_t n = std::min(cfg.n_target, data.target_unlabelled.size());
  const std::vector<QASample> targets(data.target_unlabelled.begin(),
                                      data.target_unlabelled.begin() + static_cast<std::ptrdiff_t>(n));
  st.rounds = adapt(model, source.snapshot ? &*source.snapshot : nullptr, targets, cfg.adapt);
  st.after = evaluate(model, data.target_test);
  return st;
}

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.error.empty(); }));
}

std::vector<SweepResult::Point> SweepResult::means() const {
  std::vector<Point> out;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const Point& p) { return p.value == r.value; });
    if (it == out.end()) {
      out.push_back({r.value, 0.0, 0.0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - out.begin());
    it->em += r.em;
    it->f1 += r.f1;
    ++counts[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].em /= static_cast<double>(counts[i]);
    out[i].f1 /= static_cast<double>(counts[i]);
  }
  return out;
}

SweepResult run_sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values,
                      std::size_t repeats) {
  SweepResult result;
  result.param = param;
  for (std::size_t r = 0; r < repeats; ++r) {
    RunConfig cfg = base;
    cfg.seed = base.seed + r;
    if (param == SweepParam::kNSamples) {
      double max_n = 0.0;
      for (const double v : values) max_n = std::max(max_n, v);
      cfg.n_target = static_cast<std::size_t>(max_n);
    }
    cfg = resolve(cfg);

    std::optional<ExperimentData> data;
    std::optional<SourceStage> source;
    std::string stage_error;
    try {
      data = make_data(cfg);
      source = run_source_stage(cfg, *data);
    } catch (const std::exception& e) {
      stage_error = e.what();
    }
    for (const double v : values) {
      SweepRow row;
      row.value = v;
      row.seed = cfg.seed;
      if (!stage_error.empty()) {
        row.error = stage_error;
        result.rows.push_back(std::move(row));
        continue;
      }
      try {
        RunConfig run = cfg;
        if (param == SweepParam::kAlpha) {
          run.adapt.alpha = v;
        } else {
          if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("nsamples values must be positive integers");
          run.n_target = static_cast<std::size_t>(v);
        }
        const AdaptStage st = run_adapt_stage(run, *source, *data);
        row.em = st.after.em;
        row.f1 = st.after.f1;
        row.em_before = st.before.em;
        row.f1_before = st.before.f1;
        for (const auto& rl : st.rounds) {
          row.pseudo_counts.push_back(rl.n_pseudo);
          row.qualified_fractions.push_back(rl.qualified_fraction);
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_training_log_csv(const std::vector<EpochLog>& log, std::ostream& out) {
  out << "epoch,ce,sparsity,total,active_fraction\n" << std::setprecision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.mean.ce << ',' << e.mean.sparsity << ',' << e.mean.total << ','
        << e.active_fraction << '\n';
  }
}

void write_round_log_csv(const std::vector<RoundLog>& log, std::ostream& out) {
  out << "round,n_pseudo,qualified_fraction,mean_score,ce,sparsity,total\n" << std::setprecision(17);
  for (const auto& r : log) {
    out << r.round << ',' << r.n_pseudo << ',' << r.qualified_fraction << ',' << r.mean_score << ','
        << r.mean.ce << ',' << r.mean.sparsity << ',' << r.mean.total << '\n';
  }
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << "param_value,seed,em,f1,em_before,f1_before,pseudo_counts,qualified_fractions,error\n"
      << std::setprecision(17);
  for (const auto& r : result.rows) {
    out << r.value << ',' << r.seed << ',' << r.em << ',' << r.f1 << ',' << r.em_before << ','
        << r.f1_before << ',';
    for (std::size_t i = 0; i < r.pseudo_counts.size(); ++i) out << (i ? ";" : "") << r.pseudo_counts[i];
    out << ',';
    for (std::size_t i = 0; i < r.qualified_fractions.size(); ++i) {
      out << (i ? ";" : "") << r.qualified_fractions[i];
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
}

std::string sweep_svg(const SweepResult& result) {
  const auto points = result.means();
  const bool log_x = result.param == SweepParam::kNSamples;
  constexpr double kW = 640, kH = 400, kL = 60, kR = 20, kT = 30, kB = 50;

  auto xv = [log_x](double v) { return log_x ? std::log10(std::max(v, 1e-12)) : v; };
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 100;
  if (!points.empty()) {
    x_lo = x_hi = xv(points.front().value);
    y_lo = y_hi = points.front().em;
    for (const auto& p : points) {
      x_lo = std::min(x_lo, xv(p.value));
      x_hi = std::max(x_hi, xv(p.value));
      y_lo = std::min({y_lo, p.em, p.f1});
      y_hi = std::max({y_hi, p.em, p.f1});
    }
  }
  if (x_hi == x_lo) x_hi = x_lo + 1;
  y_lo = std::max(0.0, std::floor(y_lo / 10) * 10);
  y_hi = std::min(100.0, std::ceil(y_hi / 10) * 10);
  if (y_hi <= y_lo) y_hi = y_lo + 10;
  auto px = [&](double v) { return kL + (xv(v) - x_lo) / (x_hi - x_lo) * (kW - kL - kR); };
  auto py = [&](double v) { return kH - kB - (v - y_lo) / (y_hi - y_lo) * (kH - kT - kB); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\"" << kH - kB
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
     << "\" stroke=\"black\"/>\n";
  for (const auto& p : points) {
    os << "<text x=\"" << px(p.value) << "\" y=\"" << kH - kB + 18 << "\" text-anchor=\"middle\">"
       << std::defaultfloat << p.value << std::fixed << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 4.0;
    os << "<text x=\"" << kL - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  const char* xlabel = log_x ? "unlabelled target samples n' (log scale)" : "threshold alpha";
  os << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << xlabel << "</text>\n";
  auto polyline = [&](auto metric, const char* color, const char* name, double ly) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) os << px(p.value) << ',' << py(metric(p)) << ' ';
    os << "\"/>\n";
    for (const auto& p : points) {
      os << "<circle cx=\"" << px(p.value) << "\" cy=\"" << py(metric(p)) << "\" r=\"3\" fill=\""
         << color << "\"/>\n";
    }
    os << "<text x=\"" << kW - kR - 40 << "\" y=\"" << ly << "\" fill=\"" << color << "\">" << name
       << "</text>\n";
  };
  polyline([](const SweepResult::Point& p) { return p.em; }, "#1f77b4", "EM", kT + 4);
  polyline([](const SweepResult::Point& p) { return p.f1; }, "#d62728", "F1", kT + 20);
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace mdaqa
