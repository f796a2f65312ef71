#pragma once

#include <torch/torch.h>

namespace fsg::blocks {

// Depthwise stage of the inverted residual unit (the DKS ablation toggle).
enum class DepthwiseKernel {
  kStacked3x3,  // three stacked 3x3 depthwise convolutions
  kSingle7x7,   // one 7x7 depthwise convolution
};

struct BlockConfig {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t expansion = 4;
  int64_t dw_kernel = 3;
  DepthwiseKernel depthwise = DepthwiseKernel::kStacked3x3;
  double drop_prob = 0.0;
  double gamma_init = 1e-6;

  void validate() const;
};

// Layer normalization over the channel axis of an (N, C, H, W) map.
class LayerNorm2dImpl : public torch::nn::Module {
 public:
  explicit LayerNorm2dImpl(int64_t channels, double eps = 1e-6);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  double eps_;
};
TORCH_MODULE(LayerNorm2d);

// Stochastic depth: drops the whole residual branch per sample while
// training and rescales survivors by 1/(1-p). Identity in eval mode.
class DropPathImpl : public torch::nn::Module {
 public:
  explicit DropPathImpl(double p = 0.0);
  torch::Tensor forward(const torch::Tensor& x);
  double probability() const { return p_; }

 private:
  double p_;
};
TORCH_MODULE(DropPath);

/// y = x + drop(gamma * project(GELU(expand(LN(depthwise(x))))))
///
/// `depthwise` is either three stacked dw_kernel x dw_kernel depthwise
/// convolutions or a single 7x7 one. in_channels must equal out_channels.
class InvertedResidualUnitImpl : public torch::nn::Module {
 public:
  explicit InvertedResidualUnitImpl(const BlockConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential depthwise{nullptr};
  LayerNorm2d norm{nullptr};
  torch::nn::Conv2d expand{nullptr};
  torch::nn::Conv2d project{nullptr};
  torch::Tensor gamma;
  DropPath drop{nullptr};
};
TORCH_MODULE(InvertedResidualUnit);

// Kernel-2 stride-2 entry convolution (+LN) followed by `depth` inverted
// residual units separated by ReLU.
class DownConvBlockImpl : public torch::nn::Module {
 public:
  DownConvBlockImpl(const BlockConfig& cfg, int depth,
                    std::vector<double> drop_probs = {});
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d entry{nullptr};
  LayerNorm2d entry_norm{nullptr};
  torch::nn::ModuleList units;
};
TORCH_MODULE(DownConvBlock);

// Runs a list of inverted residual units with ReLU between consecutive ones.
torch::Tensor run_units(torch::nn::ModuleList& units, torch::Tensor x);

// x * sigmoid(conv7x7([mean_c(x), max_c(x)])); 99 parameters.
class SpatialAttentionImpl : public torch::nn::Module {
 public:
  SpatialAttentionImpl();
  torch::Tensor gate(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

// Two conv3x3 + LN + ReLU stages with a skip connection (identity when the
// channel count is preserved, 1x1 projection otherwise).
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  ResidualBlockImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr};
  LayerNorm2d norm1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  LayerNorm2d norm2{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Plain downsampling stage used when the DC toggle is off:
// 2x2 max-pool then a residual double convolution.
class PlainDownBlockImpl : public torch::nn::Module {
 public:
  PlainDownBlockImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  ResidualBlock block{nullptr};
};
TORCH_MODULE(PlainDownBlock);

// Bilinear 2x upsample followed by a 1x1 convolution.
class UpConvImpl : public torch::nn::Module {
 public:
  UpConvImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(UpConv);

torch::Tensor upsample2x(const torch::Tensor& x);
torch::Tensor resize_to(const torch::Tensor& x, int64_t h, int64_t w);

int64_t count_parameters(const torch::nn::Module& module);

}  // namespace fsg::blocks
