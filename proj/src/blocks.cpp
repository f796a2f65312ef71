#include "fsgnet/blocks.hpp"

#include <string>

#include "fsgnet/errors.hpp"

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace fsg::blocks {
namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1,
                int64_t groups = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k)
                        .stride(stride)
                        .padding(stride == 1 ? k / 2 : 0)
                        .groups(groups));
}

}  // namespace

void BlockConfig::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw ValidationError("BlockConfig: channel counts must be positive");
  }
  if (expansion < 1) throw ValidationError("BlockConfig: expansion must be >= 1");
  if (dw_kernel < 1 || dw_kernel % 2 == 0) {
    throw ValidationError("BlockConfig: dw_kernel must be odd");
  }
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw ValidationError("BlockConfig: drop_prob must lie in [0, 1)");
  }
}

LayerNorm2dImpl::LayerNorm2dImpl(int64_t channels, double eps) : eps_(eps) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor LayerNorm2dImpl::forward(const torch::Tensor& x) {
  const auto mean = x.mean(1, /*keepdim=*/true);
  const auto centered = x - mean;
  const auto var = centered.pow(2).mean(1, /*keepdim=*/true);
  const auto y = centered * torch::rsqrt(var + eps_);
  return y * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
}

DropPathImpl::DropPathImpl(double p) : p_(p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ValidationError("DropPath: probability must lie in [0, 1)");
  }
}

torch::Tensor DropPathImpl::forward(const torch::Tensor& x) {
  if (!is_training() || p_ == 0.0) return x;
  const double keep = 1.0 - p_;
  std::vector<int64_t> shape(static_cast<size_t>(x.dim()), 1);
  shape[0] = x.size(0);
  const auto mask = torch::bernoulli(torch::full(shape, keep, x.options()));
  return x * mask / keep;
}

InvertedResidualUnitImpl::InvertedResidualUnitImpl(const BlockConfig& cfg) {
  cfg.validate();
  if (cfg.in_channels != cfg.out_channels) {
    throw ValidationError("InvertedResidualUnit: identity skip needs in_channels (" +
                          std::to_string(cfg.in_channels) +
                          ") == out_channels (" +
                          std::to_string(cfg.out_channels) + ")");
  }
  const int64_t c = cfg.in_channels;
  const int64_t hidden = c * cfg.expansion;

  depthwise = nn::Sequential();
  if (cfg.depthwise == DepthwiseKernel::kStacked3x3) {
    for (int i = 0; i < 3; ++i) {
      depthwise->push_back(conv(c, c, cfg.dw_kernel, 1, c));
    }
  } else {
    depthwise->push_back(conv(c, c, 7, 1, c));
  }
  register_module("depthwise", depthwise);
  norm = register_module("norm", LayerNorm2d(c));
  expand = register_module("expand", conv(c, hidden, 1));
  project = register_module("project", conv(hidden, c, 1));
  gamma = register_parameter("gamma", torch::full({c}, cfg.gamma_init));
  drop = register_module("drop", DropPath(cfg.drop_prob));
}

torch::Tensor InvertedResidualUnitImpl::forward(const torch::Tensor& x) {
  auto y = depthwise->forward(x);
  y = project(F::gelu(expand(norm(y))));
  return x + drop(gamma.view({1, -1, 1, 1}) * y);
}

torch::Tensor run_units(nn::ModuleList& units, torch::Tensor x) {
  bool first = true;
  for (auto& m : *units) {
    if (!first) x = torch::relu(x);
    x = m->as<InvertedResidualUnit>()->forward(x);
    first = false;
  }
  return x;
}

DownConvBlockImpl::DownConvBlockImpl(const BlockConfig& cfg, int depth,
                                     std::vector<double> drop_probs) {
  cfg.validate();
  if (depth < 0) throw ValidationError("DownConvBlock: depth must be >= 0");
  if (!drop_probs.empty() && drop_probs.size() != static_cast<size_t>(depth)) {
    throw ValidationError("DownConvBlock: one drop probability per unit expected");
  }
  entry = register_module("entry", conv(cfg.in_channels, cfg.out_channels, 2, 2));
  entry_norm = register_module("entry_norm", LayerNorm2d(cfg.out_channels));
  units = register_module("units", nn::ModuleList());
  for (int i = 0; i < depth; ++i) {
    BlockConfig unit = cfg;
    unit.in_channels = cfg.out_channels;
    unit.drop_prob = drop_probs.empty() ? cfg.drop_prob : drop_probs[i];
    units->push_back(InvertedResidualUnit(unit));
  }
}

torch::Tensor DownConvBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ValidationError("DownConvBlock: spatial dims must be even, got " +
                          std::to_string(x.size(-2)) + "x" +
                          std::to_string(x.size(-1)));
  }
  return run_units(units, entry_norm(entry(x)));
}

SpatialAttentionImpl::SpatialAttentionImpl() {
  conv = register_module("conv", blocks::conv(2, 1, 7));
}

torch::Tensor SpatialAttentionImpl::gate(const torch::Tensor& x) {
  const auto avg = x.mean(1, /*keepdim=*/true);
  const auto mx = std::get<0>(x.max(1, /*keepdim=*/true));
  return torch::sigmoid(conv(torch::cat({avg, mx}, 1)));
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& x) {
  return x * gate(x);
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels)
    : ResidualBlockImpl(channels, channels) {}

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels) {
  conv1 = register_module("conv1", conv(in_channels, out_channels, 3));
  norm1 = register_module("norm1", LayerNorm2d(out_channels));
  conv2 = register_module("conv2", conv(out_channels, out_channels, 3));
  norm2 = register_module("norm2", LayerNorm2d(out_channels));
  if (in_channels != out_channels) {
    skip = register_module("skip", conv(in_channels, out_channels, 1));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1(conv1(x)));
  y = torch::relu(norm2(conv2(y)));
  return (skip ? skip(x) : x) + y;
}

PlainDownBlockImpl::PlainDownBlockImpl(int64_t in_channels, int64_t out_channels) {
  block = register_module("block", ResidualBlock(in_channels, out_channels));
}

torch::Tensor PlainDownBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(2) % 2 != 0 || x.size(3) % 2 != 0) {
    throw ValidationError("PlainDownBlock: spatial dims must be even");
  }
  return block(F::max_pool2d(x, F::MaxPool2dFuncOptions(2)));
}

UpConvImpl::UpConvImpl(int64_t in_channels, int64_t out_channels) {
  conv = register_module("conv", blocks::conv(in_channels, out_channels, 1));
}

torch::Tensor UpConvImpl::forward(const torch::Tensor& x) {
  return conv(upsample2x(x));
}

torch::Tensor resize_to(const torch::Tensor& x, int64_t h, int64_t w) {
  if (x.size(-2) == h && x.size(-1) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return resize_to(x, 2 * x.size(-2), 2 * x.size(-1));
}

int64_t count_parameters(const nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace fsg::blocks
