#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fsg::metrics {

struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t tn = 0;
  uint64_t fn = 0;

  uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

// All values x100.
struct ScalarMetrics {
  double miou = 0;
  double f1 = 0;
  double acc = 0;
  double sen = 0;
  double mcc = 0;
};

struct MetricReport {
  double miou = 0;
  double f1 = 0;
  double acc = 0;
  double auc = 0;
  double sen = 0;
  double mcc = 0;

  // Column order of the report: mIoU, F1, Acc, AUC, Sen, MCC.
  std::vector<double> values() const { return {miou, f1, acc, auc, sen, mcc}; }
  static const std::vector<std::string>& column_names();
};

// Pixels with probs > threshold are positive. Only pixels with valid != 0 are
// counted; mask and valid are nonzero-is-true. An empty `valid` span means
// every pixel is valid.
ConfusionCounts confusion(std::span<const float> probs,
                          std::span<const uint8_t> mask,
                          std::span<const uint8_t> valid, double threshold = 0.5);

ScalarMetrics scalar_metrics(const ConfusionCounts& c);

// Rank-statistic ROC AUC with midranks for ties, x100.
double auc(std::span<const float> probs, std::span<const uint8_t> mask,
           std::span<const uint8_t> valid = {});

// Mean rank of each row (model) over the columns (metrics); rank 1 is best,
// ties share the mean of their rank span.
std::vector<double> rank_average(const std::vector<std::vector<double>>& table,
                                 const std::vector<bool>& higher_is_better);

// Micro-averaged dataset-level accumulation of counts and AUC scores; keeps
// per-image reports for the per-image-mean alternative.
class ReportAccumulator {
 public:
  explicit ReportAccumulator(double threshold = 0.5) : threshold_(threshold) {}

  void add(std::span<const float> probs, std::span<const uint8_t> mask,
           std::span<const uint8_t> valid = {});

  const ConfusionCounts& counts() const { return counts_; }
  MetricReport micro() const;
  MetricReport per_image_mean() const;
  size_t images() const { return per_image_.size(); }

 private:
  double threshold_;
  ConfusionCounts counts_;
  std::vector<float> scores_;
  std::vector<uint8_t> labels_;
  std::vector<MetricReport> per_image_;
};

MetricReport make_report(const ConfusionCounts& c, double auc_value);

// Delimited report rows: model, dataset, six metrics at 3 decimals and an
// optional Rank Avg at 1 decimal.
struct ReportRow {
  std::string model;
  std::string dataset;
  MetricReport report;
  double rank_avg = -1.0;  // negative: not ranked
};

std::string report_header(char delim = '\t', bool with_rank = false);
std::string format_row(const ReportRow& row, char delim = '\t');
std::vector<ReportRow> parse_report(std::istream& in, char delim = '\t');

// Ranks the rows of each dataset against each other; rank_avg of a row is the
// model's mean rank over that dataset's metric columns.
void rank_rows(std::vector<ReportRow>& rows);

// "(-2.92)" style signed two-decimal delta.
std::string format_delta(double delta);

}  // namespace fsg::metrics
