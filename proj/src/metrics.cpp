#include "fsgnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fsgnet/errors.hpp"

namespace fsg::metrics {
namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

void check_spans(size_t n, size_t mask, size_t valid) {
  if (mask != n || (valid != 0 && valid != n)) {
    throw ValidationError("metrics: probability, mask and valid maps differ in size");
  }
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, delim)) out.push_back(field);
  return out;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

const std::vector<std::string>& MetricReport::column_names() {
  static const std::vector<std::string> names{"mIoU", "F1", "Acc", "AUC", "Sen", "MCC"};
  return names;
}

ConfusionCounts confusion(std::span<const float> probs, std::span<const uint8_t> mask,
                          std::span<const uint8_t> valid, double threshold) {
  check_spans(probs.size(), mask.size(), valid.size());
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("confusion: threshold must lie in (0, 1)");
  }
  ConfusionCounts c;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    const bool pred = probs[i] > threshold;
    const bool truth = mask[i] != 0;
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  }
  if (c.total() == 0) throw ValidationError("confusion: empty valid region");
  return c;
}

ScalarMetrics scalar_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ValidationError("scalar_metrics: no pixels counted");
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);

  ScalarMetrics m;
  m.sen = 100.0 * ratio(tp, tp + fn);
  m.acc = 100.0 * (tp + tn) / (tp + tn + fp + fn);
  m.f1 = 100.0 * ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.miou = 50.0 * (ratio(tp, tp + fp + fn) + ratio(tn, tn + fp + fn));
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = den > 0.0 ? 100.0 * (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
  return m;
}

double auc(std::span<const float> probs, std::span<const uint8_t> mask,
           std::span<const uint8_t> valid) {
  check_spans(probs.size(), mask.size(), valid.size());
  std::vector<std::pair<float, uint8_t>> items;
  items.reserve(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    items.emplace_back(probs[i], mask[i] != 0);
  }
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double positives = 0.0;
  double rank_sum = 0.0;
  for (size_t i = 0; i < items.size();) {
    size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    // 1-based ranks i+1 .. j share their mean.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k) {
      if (items[k].second) {
        positives += 1.0;
        rank_sum += midrank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(items.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw ValidationError("auc: the valid region must contain both classes");
  }
  return 100.0 * (rank_sum - positives * (positives + 1.0) / 2.0) /
         (positives * negatives);
}

std::vector<double> rank_average(const std::vector<std::vector<double>>& table,
                                 const std::vector<bool>& higher_is_better) {
  const size_t rows = table.size();
  const size_t cols = higher_is_better.size();
  for (const auto& row : table) {
    if (row.size() != cols) {
      throw ValidationError("rank_average: every row needs one entry per column");
    }
  }
  std::vector<double> mean(rows, 0.0);
  if (rows == 0 || cols == 0) return mean;

  std::vector<size_t> order(rows);
  for (size_t c = 0; c < cols; ++c) {
    std::iota(order.begin(), order.end(), size_t{0});
    const bool hib = higher_is_better[c];
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return hib ? table[a][c] > table[b][c] : table[a][c] < table[b][c];
    });
    for (size_t i = 0; i < rows;) {
      size_t j = i;
      while (j < rows && table[order[j]][c] == table[order[i]][c]) ++j;
      const double rank = 0.5 * static_cast<double>(i + 1 + j);
      for (size_t k = i; k < j; ++k) mean[order[k]] += rank;
      i = j;
    }
  }
  for (auto& m : mean) m /= static_cast<double>(cols);
  return mean;
}

MetricReport make_report(const ConfusionCounts& c, double auc_value) {
  const auto s = scalar_metrics(c);
  MetricReport r;
  r.miou = s.miou;
  r.f1 = s.f1;
  r.acc = s.acc;
  r.auc = auc_value;
  r.sen = s.sen;
  r.mcc = s.mcc;
  return r;
}

void ReportAccumulator::add(std::span<const float> probs, std::span<const uint8_t> mask,
                            std::span<const uint8_t> valid) {
  const auto c = confusion(probs, mask, valid, threshold_);
  counts_ += c;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!valid.empty() && valid[i] == 0) continue;
    scores_.push_back(probs[i]);
    labels_.push_back(mask[i] != 0);
  }
  const bool both = c.tp + c.fn > 0 && c.tn + c.fp > 0;
  per_image_.push_back(make_report(c, both ? auc(probs, mask, valid) : 0.0));
}

MetricReport ReportAccumulator::micro() const {
  if (counts_.total() == 0) throw ValidationError("ReportAccumulator: nothing accumulated");
  const bool both = counts_.tp + counts_.fn > 0 && counts_.tn + counts_.fp > 0;
  return make_report(counts_, both ? auc(scores_, labels_) : 0.0);
}

MetricReport ReportAccumulator::per_image_mean() const {
  if (per_image_.empty()) throw ValidationError("ReportAccumulator: nothing accumulated");
  MetricReport m;
  for (const auto& r : per_image_) {
    m.miou += r.miou;
    m.f1 += r.f1;
    m.acc += r.acc;
    m.auc += r.auc;
    m.sen += r.sen;
    m.mcc += r.mcc;
  }
  const double n = static_cast<double>(per_image_.size());
  m.miou /= n;
  m.f1 /= n;
  m.acc /= n;
  m.auc /= n;
  m.sen /= n;
  m.mcc /= n;
  return m;
}

std::string report_header(char delim, bool with_rank) {
  std::string h = std::string("model") + delim + "dataset";
  for (const auto& n : MetricReport::column_names()) h += delim + n;
  if (with_rank) h += std::string(1, delim) + "RankAvg";
  return h;
}

std::string format_row(const ReportRow& row, char delim) {
  std::string s = row.model + delim + row.dataset;
  for (double v : row.report.values()) s += delim + fixed(v, 3);
  if (row.rank_avg >= 0.0) s += delim + fixed(row.rank_avg, 1);
  return s;
}

std::vector<ReportRow> parse_report(std::istream& in, char delim) {
  std::vector<ReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("model", 0) == 0 || line[0] == '#') continue;
    const auto f = split(line, delim);
    if (f.size() != 8 && f.size() != 9) {
      throw ValidationError("report line has " + std::to_string(f.size()) +
                            " fields, expected 8 or 9: " + line);
    }
    ReportRow r;
    r.model = f[0];
    r.dataset = f[1];
    try {
      r.report.miou = std::stod(f[2]);
      r.report.f1 = std::stod(f[3]);
      r.report.acc = std::stod(f[4]);
      r.report.auc = std::stod(f[5]);
      r.report.sen = std::stod(f[6]);
      r.report.mcc = std::stod(f[7]);
    } catch (const std::exception&) {
      throw ValidationError("report line has a non-numeric metric: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void rank_rows(std::vector<ReportRow>& rows) {
  std::map<std::string, std::vector<size_t>> by_dataset;
  for (size_t i = 0; i < rows.size(); ++i) by_dataset[rows[i].dataset].push_back(i);
  const std::vector<bool> hib(MetricReport::column_names().size(), true);
  for (const auto& [dataset, idx] : by_dataset) {
    std::vector<std::vector<double>> table;
    for (size_t i : idx) table.push_back(rows[i].report.values());
    const auto ranks = rank_average(table, hib);
    for (size_t k = 0; k < idx.size(); ++k) rows[idx[k]].rank_avg = ranks[k];
  }
}

std::string format_delta(double delta) {
  // Round first so residue below the printed precision reads as +0.00.
  double v = std::round(delta * 100.0) / 100.0;
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%+.2f)", v);
  return buf;
}

}  // namespace fsg::metrics
