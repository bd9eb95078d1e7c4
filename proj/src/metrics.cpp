#include "mdaqa/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "mdaqa/parallel.hpp"

namespace mdaqa {

double token_f1(SpanLabel pred, SpanLabel gold) {
  const std::size_t lo = std::max(pred.start, gold.start);
  const std::size_t hi = std::min(pred.end, gold.end);
  if (lo > hi) return 0.0;
  const auto overlap = static_cast<double>(hi - lo + 1);
  const double precision = overlap / static_cast<double>(pred.length());
  const double recall = overlap / static_cast<double>(gold.length());
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport evaluate(const SpanPredictor& predict, const std::vector<QASample>& data) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  MetricsReport report;
  report.n = data.size();
  report.records.reserve(data.size());
  for (const auto& s : data) {
    if (!s.answer) throw DataError("evaluate: sample '" + s.id + "' has no gold label");
  }
  std::vector<ScoredPrediction> preds(data.size());
  parallel_for(data.size(), [&](std::size_t i) { preds[i] = predict(data[i]); });

  double em_sum = 0.0;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const QASample& s = data[i];
    const ScoredPrediction& p = preds[i];
    SampleRecord r{s.id, exact_match(p.span, *s.answer), token_f1(p.span, *s.answer), p.span,
                   *s.answer, p.score};
    em_sum += r.em;
    f1_sum += r.f1;
    report.records.push_back(std::move(r));
  }
  report.em = 100.0 * em_sum / static_cast<double>(data.size());
  report.f1 = 100.0 * f1_sum / static_cast<double>(data.size());
  return report;
}

MetricsReport evaluate(const QaModel& model, const std::vector<QASample>& data) {
  return evaluate([&model](const QASample& s) { return predict_span(model, s); }, data);
}

void write_metrics_csv(const MetricsReport& report, std::ostream& out) {
  out << "id,em,f1,pred_start,pred_end,gold_start,gold_end,score\n";
  out << std::setprecision(17);
  for (const auto& r : report.records) {
    out << r.id << ',' << r.em << ',' << r.f1 << ',' << r.pred.start << ',' << r.pred.end << ','
        << r.gold.start << ',' << r.gold.end << ',' << r.score << '\n';
  }
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_metrics_csv(report, out);
}

std::string metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["em"] = report.em;
  j["f1"] = report.f1;
  j["n"] = report.n;
  auto& recs = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : report.records) {
    nlohmann::ordered_json o;
    o["id"] = r.id;
    o["em"] = r.em;
    o["f1"] = r.f1;
    o["pred"] = {r.pred.start, r.pred.end};
    o["gold"] = {r.gold.start, r.gold.end};
    o["score"] = r.score;
    recs.push_back(std::move(o));
  }
  return j.dump(2);
}

}  // namespace mdaqa
