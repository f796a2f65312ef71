#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "fsgnet/augment.hpp"
#include "fsgnet/data.hpp"
#include "fsgnet/network.hpp"

namespace fsg {

struct TrainConfig {
  double base_lr = 1e-3;
  int warmup_epochs = 20;
  int cycle_epochs = 100;
  double eta_min = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.05;
  double threshold = 0.5;
  int batch_size = 4;
  int early_stop_epochs = 400;
  // Repeat the training list until an epoch holds at least this many batches.
  int min_batches_per_epoch = 2;
  // Hard cap on epochs; 0 runs until early stopping.
  int max_epochs = 0;
  std::map<data::Dataset, int> padded_shape{{data::Dataset::kDrive, 608},
                                            {data::Dataset::kStare, 704},
                                            {data::Dataset::kChaseDb1, 1024},
                                            {data::Dataset::kHrf, 1344}};
  data::AugmentationConfig augmentation;
  uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Everything a CLI run needs: model, recipe and where the data lives.
struct RunConfig {
  ModelConfig model = build_variant("L");
  TrainConfig train;
  std::optional<data::Dataset> dataset;
  std::filesystem::path data_root;
  std::filesystem::path output_dir = "runs";
};

// Parses `key = value` lines ('#' starts a comment). Recipe keys follow the
// hyper-parameter table row names in snake case; multi-valued rows take
// space-separated `name=value` items, e.g.
//   random_jitter = b=0.2 c=0.2 s=0.2 h=0.1 prob=0.8
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
// Inverse of parse_config for the recipe and model keys.
std::string format_config(const RunConfig& cfg);

// Environment variable that overrides `data_root`.
inline constexpr const char* kDataRootEnv = "FSGNET_DATA_ROOT";
void apply_environment(RunConfig& cfg);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace fsg
