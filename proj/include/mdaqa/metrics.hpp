#pragma once

// Exact match and token-overlap F1 over span positions.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"
#include "mdaqa/selftrain.hpp"

namespace mdaqa {

inline int exact_match(SpanLabel pred, SpanLabel gold) {
  return pred.start == gold.start && pred.end == gold.end ? 1 : 0;
}

double token_f1(SpanLabel pred, SpanLabel gold);

struct SampleRecord {
  std::string id;
  int em = 0;
  double f1 = 0.0;
  SpanLabel pred;
  SpanLabel gold;
  double score = 0.0;
};

struct MetricsReport {
  double em = 0.0;  // percent
  double f1 = 0.0;  // percent
  std::size_t n = 0;
  std::vector<SampleRecord> records;
};

using SpanPredictor = std::function<ScoredPrediction(const QASample&)>;

/// Throws DataError when a sample has no gold label. `predict` may run on
/// several threads at once (see MDAQA_THREADS).
MetricsReport evaluate(const SpanPredictor& predict, const std::vector<QASample>& data);
MetricsReport evaluate(const QaModel& model, const std::vector<QASample>& data);

/// Columns: id,em,f1,pred_start,pred_end,gold_start,gold_end,score
void write_metrics_csv(const MetricsReport& report, std::ostream& out);
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
std::string metrics_json(const MetricsReport& report);

}  // namespace mdaqa
