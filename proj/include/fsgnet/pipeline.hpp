#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "fsgnet/config.hpp"
#include "fsgnet/data.hpp"
#include "fsgnet/metrics.hpp"
#include "fsgnet/network.hpp"

namespace fsg {

// Linear warm-up from base_lr/20 followed by cosine annealing with warm
// restarts between base_lr and eta_min.
double lr_at(const TrainConfig& cfg, double epoch);

// Stops once `patience` epochs pass without a strictly better score.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  // Records the score of the next epoch; true when training should halt.
  bool update(double score);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_seen() const { return epochs_; }

 private:
  int patience_;
  double best_ = -1.0;
  int best_epoch_ = -1;
  int epochs_ = 0;
  bool improved_ = false;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;    // mean over the epoch's mini-batches
  double val_f1 = 0;  // x100
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::pair<std::string, torch::Tensor>> weights;  // parameters and buffers
  double best_val_f1 = 0;
  int epoch = -1;  // epoch the weights come from
  std::string rng_state;
  std::vector<EpochLog> history;
};

// Named parameters and buffers, detached copies.
std::vector<std::pair<std::string, torch::Tensor>> snapshot(FSGNet& model);
// Builds the network described by `ckpt` and assigns its weights; names and
// shapes must match exactly.
FSGNet instantiate(const Checkpoint& ckpt);

// Weights archive at `path` plus a JSON sidecar at `path` + ".json".
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Throws ValidationError when `expected` is given and differs from the stored
// model configuration, or when archive and sidecar disagree.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

// (3, H, W) float tensor in [0, 1] from an RGB 8-bit image.
torch::Tensor image_to_tensor(const cv::Mat& rgb);
// (1, H, W) float tensor of the {0, 1} mask.
torch::Tensor mask_to_tensor(const cv::Mat& mask);

// Padding applied to a sample at inference: the dataset square from the
// recipe when known, else each side rounded up to a multiple of 32.
data::PaddingRecord inference_padding(const TrainConfig& cfg, int h, int w,
                                      std::optional<data::Dataset> d);

// Maps a padded (1, 3, H, W) input to per-head probability maps, ordered from
// full resolution downwards.
using Predictor = std::function<std::vector<torch::Tensor>(const torch::Tensor&)>;
Predictor model_predictor(FSGNet& model);

// Full-resolution probability map (CV_32FC1) at the original image size.
cv::Mat full_probability(const Predictor& predictor, const cv::Mat& image,
                         const data::PaddingRecord& rec);

// Pad, predict, unpad, micro-average confusion counts over all samples.
metrics::MetricReport evaluate(const Predictor& predictor,
                               const std::vector<data::SamplePair>& samples,
                               const TrainConfig& cfg, std::optional<data::Dataset> d);
metrics::MetricReport evaluate(const Checkpoint& ckpt,
                               const std::vector<data::SamplePair>& samples,
                               std::optional<data::Dataset> d);

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
  // Validation F1 is skipped and reported as 0 (benchmarks only).
  bool skip_validation = false;
};

// AdamW with the recipe's schedule; keeps the best-validation-F1 weights and
// stops early. Throws DivergenceError on a non-finite loss.
Checkpoint train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const data::Split& split, std::optional<data::Dataset> d,
                 const TrainOptions& options = {});

struct PredictionFiles {
  std::filesystem::path mask;
  std::vector<std::filesystem::path> stages;  // one per head, full resolution first
};

// Writes <stem>_mask.png ({0, 255}) and <stem>_stage<i>.png probability maps at
// the original resolution.
PredictionFiles predict(const Checkpoint& ckpt, const std::filesystem::path& image,
                        const std::filesystem::path& out_dir,
                        std::optional<data::Dataset> d = std::nullopt);
PredictionFiles predict(const Predictor& predictor, const TrainConfig& cfg,
                        const cv::Mat& image, const std::string& stem,
                        const std::filesystem::path& out_dir,
                        std::optional<data::Dataset> d = std::nullopt);

struct CrossEvalResult {
  metrics::MetricReport report;
  std::optional<metrics::MetricReport> baseline;
  // report - baseline per metric, when a baseline is given.
  std::vector<double> deltas;
};

// Evaluates a checkpoint on another dataset with that dataset's padding.
CrossEvalResult cross_eval(const Checkpoint& ckpt,
                           const std::vector<data::SamplePair>& samples, data::Dataset target,
                           const std::optional<metrics::MetricReport>& baseline = std::nullopt);

}  // namespace fsg
