#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "fsgnet/blocks.hpp"
#include "fsgnet/guided_filter.hpp"

namespace fsg {

inline constexpr int kNumStages = 4;
inline constexpr int64_t kSizeMultiple = 32;

// Ablation switches; all on is the full model.
struct AblationToggles {
  bool dc = true;   // modernized down-convolution blocks (else plain residual)
  bool grm = true;  // guided residual modules (else concat + 1x1 conv)
  bool sa = true;   // spatial attention at the bottleneck
  bool dks = true;  // three stacked 3x3 depthwise (else a single 7x7)
  bool ds = true;   // deep supervision heads (else full-resolution head only)

  bool operator==(const AblationToggles&) const = default;
};

struct ModelConfig {
  std::string name = "custom";
  int64_t base_channels = 64;
  std::array<int, kNumStages> depths{3, 3, 9, 3};
  AblationToggles toggles;
  gf::WindowSpec grm_spec{2, 1e-2};
  int64_t in_channels = 3;
  int num_heads = 3;
  int64_t expansion = 4;
  double drop_path_rate = 0.1;
  double gamma_init = 1e-6;

  // Channel width of stage s (1-based): base * 2^(s-1).
  int64_t stage_width(int s) const { return base_channels << (s - 1); }
  // Width the guided block works at for stage s.
  int64_t guided_width(int s) const { return std::max<int64_t>(1, stage_width(s) / 2); }
  int active_heads() const { return toggles.ds ? num_heads : 1; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Named capacity variants: L, B, S, T, N.
ModelConfig build_variant(std::string_view name);
const std::vector<std::string>& variant_names();
// Published parameter count (millions) of a named variant.
double reference_params_millions(std::string_view name);

// Ordered sigmoid maps at full, 1/2, 1/4 ... resolution.
struct PredictionSet {
  std::vector<torch::Tensor> preds;
};

using FeaturePyramid = std::array<torch::Tensor, kNumStages>;

// Throws ValidationError unless x is (N, in_channels, H, W) with H and W
// multiples of 32.
void check_network_input(const torch::Tensor& x, int64_t in_channels);

/// Encoder/decoder producing full-scale decoder features F1..F4.
///
/// Stage 1 runs at input resolution (stem + units); stages 2..4 each take the
/// previous stage output concatenated with a 3x3 convolution of the input image
/// pooled to the same resolution, and halve it with a down-convolution block.
/// Decoder stage s fuses [e_s, up(d_{s+1}), down(e_{s-1})].
class FeatureRepresentationImpl : public torch::nn::Module {
 public:
  explicit FeatureRepresentationImpl(const ModelConfig& cfg);
  FeaturePyramid forward(const torch::Tensor& x);

 private:
  torch::Tensor run_stage_units(int s, torch::Tensor x);
  torch::Tensor run_merge_unit(int s, torch::Tensor x);

  ModelConfig cfg_;
  torch::nn::Conv2d stem{nullptr};
  blocks::LayerNorm2d stem_norm{nullptr};
  torch::nn::ModuleList stem_units;            // DC on
  blocks::ResidualBlock stem_plain{nullptr};   // DC off
  std::vector<torch::nn::Conv2d> aux_conv;     // stages 2..4
  std::vector<blocks::LayerNorm2d> aux_norm;
  std::vector<blocks::DownConvBlock> down;     // stages 2..4, DC on
  std::vector<blocks::PlainDownBlock> down_plain;  // DC off
  blocks::SpatialAttention attention{nullptr};
  std::vector<blocks::UpConv> up;              // into stages 1..3
  std::vector<torch::nn::Conv2d> lower;        // into stages 2..4
  std::vector<torch::nn::Conv2d> fuse;         // stages 1..4
  std::vector<blocks::LayerNorm2d> fuse_norm;
  std::vector<blocks::InvertedResidualUnit> merge_unit;  // DC on
  std::vector<blocks::ResidualBlock> merge_plain;        // DC off
};
TORCH_MODULE(FeatureRepresentation);

/// Guided residual module.
///
///  1. M = sigmoid(conv1x1(relu(conv1x1(current) + up2x(conv1x1(up)))))
///  2. f = attention_guided_filter(current, conv1x1(up), M)
///  3. z = f * (current * M)
///  4. z = residual_block(z)
///  5. out = conv1x1(z)
///
/// `up` comes from the next deeper stage at half the resolution of `current`,
/// or equals the resolution of `current` for the deepest stage.
class GuidedResidualModuleImpl : public torch::nn::Module {
 public:
  GuidedResidualModuleImpl(int64_t channels, int64_t up_channels,
                           gf::WindowSpec spec);
  torch::Tensor forward(const torch::Tensor& current, const torch::Tensor& up);
  torch::Tensor attention_map(const torch::Tensor& current, const torch::Tensor& up);

  // Replace the learned attention map by a constant (tests only).
  std::optional<double> attention_override;

  torch::nn::Conv2d att_current{nullptr};
  torch::nn::Conv2d att_up{nullptr};
  torch::nn::Conv2d att_out{nullptr};
  torch::nn::Conv2d up_proj{nullptr};
  blocks::ResidualBlock residual{nullptr};
  torch::nn::Conv2d out_conv{nullptr};

 private:
  gf::WindowSpec spec_;
};
TORCH_MODULE(GuidedResidualModule);

// GRM replacement when the GRM toggle is off: concat + 1x1 conv + LN + ReLU.
class PlainMergeImpl : public torch::nn::Module {
 public:
  PlainMergeImpl(int64_t channels, int64_t up_channels);
  torch::Tensor forward(const torch::Tensor& current, const torch::Tensor& up);

  torch::nn::Conv2d conv{nullptr};
  blocks::LayerNorm2d norm{nullptr};
};
TORCH_MODULE(PlainMerge);

class FSGNetImpl : public torch::nn::Module {
 public:
  explicit FSGNetImpl(const ModelConfig& cfg);

  // Per-head logits, ordered from full resolution downwards.
  std::vector<torch::Tensor> forward_logits(const torch::Tensor& x);
  PredictionSet forward(const torch::Tensor& x);

  const ModelConfig& config() const { return cfg_; }
  GuidedResidualModule grm(int s);

  FeatureRepresentation representation{nullptr};

 private:
  ModelConfig cfg_;
  std::vector<torch::nn::Conv2d> compress;
  std::vector<GuidedResidualModule> grms_;  // GRM on
  std::vector<PlainMerge> plain_;           // GRM off
  std::vector<torch::nn::Conv2d> heads;
};
TORCH_MODULE(FSGNet);

FSGNet make_model(const ModelConfig& cfg, uint64_t seed);

// Exact number of learnable scalars of the built network.
int64_t count_parameters(const ModelConfig& cfg);

}  // namespace fsg
