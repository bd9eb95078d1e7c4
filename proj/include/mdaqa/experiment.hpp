#pragma once

// End-to-end experiment pipeline shared by the CLI and the acceptance suite:
// data generation, source training, adaptation, evaluation and sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdaqa/metrics.hpp"
#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"
#include "mdaqa/selftrain.hpp"
#include "mdaqa/training.hpp"

namespace mdaqa {

struct RunConfig {
  std::uint64_t seed = 1;
  double target_shift = 0.6;
  std::size_t n_source_train = 2000;
  std::size_t n_source_dev = 500;
  std::size_t n_target = 1000;       // n', unlabelled adaptation samples
  std::size_t n_target_test = 1000;  // held-out labelled target samples
  bool no_mask = false;              // ablation: M = 1, lambda = 0, ungated
  DomainSpec domain = default_domain_spec();
  ModelConfig model;
  OptimizerConfig source;
  AdaptConfig adapt;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json_value(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

/// Copy with every per-run seed and the ablation switches resolved.
RunConfig resolve(RunConfig cfg);

struct ExperimentData {
  std::vector<QASample> source_train;
  std::vector<QASample> source_dev;
  std::vector<QASample> target_unlabelled;
  std::vector<QASample> target_test;
};

DomainSpec source_spec(const RunConfig& cfg, std::string_view split);
DomainSpec target_spec(const RunConfig& cfg, std::string_view split);
ExperimentData make_data(const RunConfig& cfg);

struct SourceStage {
  QaModel model;
  std::optional<MaskSnapshot> snapshot;
  std::vector<EpochLog> log;
  MetricsReport source_dev;
};

SourceStage run_source_stage(const RunConfig& cfg, const ExperimentData& data);

struct AdaptStage {
  MetricsReport before;  // source model on the target test split
  MetricsReport after;
  std::vector<RoundLog> rounds;
};

/// Adapts a copy of the stage's model on the first `n_target` unlabelled
/// target samples.
AdaptStage run_adapt_stage(const RunConfig& cfg, const SourceStage& source,
                           const ExperimentData& data);

enum class SweepParam { kAlpha, kNSamples };

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double em = 0.0;
  double f1 = 0.0;
  double em_before = 0.0;
  double f1_before = 0.0;
  std::vector<std::size_t> pseudo_counts;
  std::vector<double> qualified_fractions;
  std::string error;  // non-empty when the run failed
};

struct SweepResult {
  SweepParam param = SweepParam::kAlpha;
  std::vector<SweepRow> rows;
  std::size_t failures() const;
  /// Mean EM and F1 per distinct value, in first-seen order.
  struct Point {
    double value, em, f1;
  };
  std::vector<Point> means() const;
};

/// For each repeat r the seed is base.seed + r; source training is shared
/// across the values of one seed.
SweepResult run_sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values,
                      std::size_t repeats);

void write_training_log_csv(const std::vector<EpochLog>& log, std::ostream& out);
void write_round_log_csv(const std::vector<RoundLog>& log, std::ostream& out);
void write_sweep_csv(const SweepResult& result, std::ostream& out);
/// Line plot of mean EM and F1 against the swept value (log x for nsamples).
std::string sweep_svg(const SweepResult& result);

/// Writes a text file, throwing on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mdaqa
