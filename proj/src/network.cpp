#include "fsgnet/network.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "fsgnet/errors.hpp"

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace fsg {
namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k)
                        .stride(stride)
                        .padding(stride == 1 ? k / 2 : 0));
}

struct VariantRow {
  int64_t base;
  std::array<int, kNumStages> depths;
  double params_m;
};

const std::map<std::string, VariantRow, std::less<>>& variant_table() {
  static const std::map<std::string, VariantRow, std::less<>> table{
      {"L", {64, {3, 3, 9, 3}, 18.32}}, {"B", {64, {2, 2, 6, 2}, 14.46}},
      {"S", {48, {3, 3, 9, 3}, 10.33}}, {"T", {32, {3, 3, 9, 3}, 4.61}},
      {"N", {16, {3, 3, 9, 3}, 1.17}},
  };
  return table;
}

const VariantRow& lookup_variant(std::string_view name) {
  const auto& table = variant_table();
  const auto it = table.find(name);
  if (it == table.end()) {
    std::string valid;
    for (const auto& n : variant_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ValidationError("unknown variant '" + std::string(name) +
                          "'; valid names: " + valid);
  }
  return it->second;
}

}  // namespace

void ModelConfig::validate() const {
  if (base_channels < 2) throw ValidationError("ModelConfig: base_channels must be >= 2");
  for (int d : depths) {
    if (d < 0) throw ValidationError("ModelConfig: stage depths must be >= 0");
  }
  if (in_channels < 1) throw ValidationError("ModelConfig: in_channels must be >= 1");
  if (num_heads < 1 || num_heads > kNumStages - 1) {
    throw ValidationError("ModelConfig: num_heads must lie in [1, 3]");
  }
  if (expansion < 1) throw ValidationError("ModelConfig: expansion must be >= 1");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
    throw ValidationError("ModelConfig: drop_path_rate must lie in [0, 1)");
  }
  grm_spec.validate();
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names{"L", "B", "S", "T", "N"};
  return names;
}

ModelConfig build_variant(std::string_view name) {
  const auto& row = lookup_variant(name);
  ModelConfig cfg;
  cfg.name = std::string(name);
  cfg.base_channels = row.base;
  cfg.depths = row.depths;
  return cfg;
}

double reference_params_millions(std::string_view name) {
  return lookup_variant(name).params_m;
}

void check_network_input(const torch::Tensor& x, int64_t in_channels) {
  if (!x.defined() || x.dim() != 4) {
    throw ValidationError("network input must be (N, C, H, W)");
  }
  if (x.size(1) != in_channels) {
    throw ValidationError("network input has " + std::to_string(x.size(1)) +
                          " channels, expected " + std::to_string(in_channels));
  }
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (h == 0 || w == 0 || h % kSizeMultiple != 0 || w % kSizeMultiple != 0) {
    throw ValidationError("network input " + std::to_string(h) + "x" +
                          std::to_string(w) +
                          " must have spatial dims that are multiples of " +
                          std::to_string(kSizeMultiple));
  }
}

// ---------------------------------------------------------------------------

FeatureRepresentationImpl::FeatureRepresentationImpl(const ModelConfig& cfg)
    : cfg_(cfg),
      aux_conv(kNumStages, nullptr),
      aux_norm(kNumStages, nullptr),
      down(kNumStages, nullptr),
      down_plain(kNumStages, nullptr),
      up(kNumStages, nullptr),
      lower(kNumStages, nullptr),
      fuse(kNumStages, nullptr),
      fuse_norm(kNumStages, nullptr),
      merge_unit(kNumStages, nullptr),
      merge_plain(kNumStages, nullptr) {
  cfg_.validate();
  const auto width = [this](int s) { return cfg_.stage_width(s); };
  const bool dc = cfg_.toggles.dc;

  blocks::BlockConfig unit;
  unit.expansion = cfg_.expansion;
  unit.gamma_init = cfg_.gamma_init;
  unit.depthwise = cfg_.toggles.dks ? blocks::DepthwiseKernel::kStacked3x3
                                    : blocks::DepthwiseKernel::kSingle7x7;

  // Stochastic depth rises linearly over all encoder units.
  int total_units = 0;
  for (int d : cfg_.depths) total_units += d;
  std::vector<double> rates;
  for (int i = 0; i < total_units; ++i) {
    rates.push_back(total_units > 1 ? cfg_.drop_path_rate * i / (total_units - 1)
                                    : 0.0);
  }
  auto stage_rates = [&](int s) {
    int offset = 0;
    for (int i = 1; i < s; ++i) offset += cfg_.depths[i - 1];
    return std::vector<double>(rates.begin() + offset,
                               rates.begin() + offset + cfg_.depths[s - 1]);
  };

  stem = register_module("stem", conv(cfg_.in_channels, width(1), 3));
  stem_norm = register_module("stem_norm", blocks::LayerNorm2d(width(1)));
  if (dc) {
    stem_units = register_module("stem_units", nn::ModuleList());
    const auto r = stage_rates(1);
    for (int i = 0; i < cfg_.depths[0]; ++i) {
      auto c = unit;
      c.in_channels = c.out_channels = width(1);
      c.drop_prob = r[i];
      stem_units->push_back(blocks::InvertedResidualUnit(c));
    }
  } else {
    stem_plain = register_module("stem_plain", blocks::ResidualBlock(width(1)));
  }

  for (int s = 2; s <= kNumStages; ++s) {
    const auto tag = std::to_string(s);
    const int i = s - 1;
    aux_conv[i] = register_module("aux" + tag, conv(cfg_.in_channels, width(s - 1), 3));
    aux_norm[i] = register_module("aux_norm" + tag, blocks::LayerNorm2d(width(s - 1)));
    if (dc) {
      auto c = unit;
      c.in_channels = c.out_channels = width(s);
      down[i] = register_module("down" + tag,
                                blocks::DownConvBlock(c, cfg_.depths[i], stage_rates(s)));
    } else {
      down_plain[i] = register_module("down" + tag,
                                      blocks::PlainDownBlock(width(s), width(s)));
    }
  }
  if (cfg_.toggles.sa) {
    attention = register_module("attention", blocks::SpatialAttention());
  }

  for (int s = 1; s <= kNumStages; ++s) {
    const auto tag = std::to_string(s);
    const int i = s - 1;
    int64_t merged = width(s);
    if (s < kNumStages) {
      up[i] = register_module("up" + tag, blocks::UpConv(width(s + 1), width(s)));
      merged += width(s);
    }
    if (s > 1) {
      lower[i] = register_module("lower" + tag, conv(width(s - 1), width(s - 1), 2, 2));
      merged += width(s - 1);
    }
    fuse[i] = register_module("fuse" + tag, conv(merged, width(s), 1));
    fuse_norm[i] = register_module("fuse_norm" + tag, blocks::LayerNorm2d(width(s)));
    if (dc) {
      auto c = unit;
      c.in_channels = c.out_channels = width(s);
      merge_unit[i] = register_module("merge" + tag, blocks::InvertedResidualUnit(c));
    } else {
      merge_plain[i] = register_module("merge" + tag, blocks::ResidualBlock(width(s)));
    }
  }
}

torch::Tensor FeatureRepresentationImpl::run_stage_units(int s, torch::Tensor x) {
  const int i = s - 1;
  if (s == 1) {
    x = stem_norm(stem(x));
    return cfg_.toggles.dc ? blocks::run_units(stem_units, x) : stem_plain(x);
  }
  return cfg_.toggles.dc ? down[i](x) : down_plain[i](x);
}

torch::Tensor FeatureRepresentationImpl::run_merge_unit(int s, torch::Tensor x) {
  const int i = s - 1;
  x = fuse_norm[i](fuse[i](x));
  return cfg_.toggles.dc ? merge_unit[i](x) : merge_plain[i](x);
}

FeaturePyramid FeatureRepresentationImpl::forward(const torch::Tensor& x) {
  check_network_input(x, cfg_.in_channels);

  FeaturePyramid enc;
  enc[0] = run_stage_units(1, x);
  torch::Tensor pooled = x;
  for (int s = 2; s <= kNumStages; ++s) {
    const int i = s - 1;
    if (s > 2) pooled = F::avg_pool2d(pooled, F::AvgPool2dFuncOptions(2));
    const auto aux = aux_norm[i](aux_conv[i](pooled));
    enc[i] = run_stage_units(s, torch::cat({enc[i - 1], aux}, 1));
  }
  if (cfg_.toggles.sa) enc[kNumStages - 1] = attention(enc[kNumStages - 1]);

  FeaturePyramid dec;
  for (int s = kNumStages; s >= 1; --s) {
    const int i = s - 1;
    std::vector<torch::Tensor> parts{enc[i]};
    if (s < kNumStages) parts.push_back(up[i](dec[i + 1]));
    if (s > 1) parts.push_back(lower[i](enc[i - 1]));
    dec[i] = run_merge_unit(s, torch::cat(parts, 1));
  }
  return dec;
}

// ---------------------------------------------------------------------------

GuidedResidualModuleImpl::GuidedResidualModuleImpl(int64_t channels,
                                                   int64_t up_channels,
                                                   gf::WindowSpec spec)
    : spec_(spec) {
  spec_.validate();
  const int64_t common = std::max<int64_t>(1, channels / 2);
  att_current = register_module("att_current", conv(channels, common, 1));
  att_up = register_module("att_up", conv(up_channels, common, 1));
  att_out = register_module("att_out", conv(common, 1, 1));
  up_proj = register_module("up_proj", conv(up_channels, channels, 1));
  residual = register_module("residual", blocks::ResidualBlock(channels));
  out_conv = register_module("out_conv", conv(channels, channels, 1));
}

torch::Tensor GuidedResidualModuleImpl::attention_map(const torch::Tensor& current,
                                                      const torch::Tensor& up) {
  const auto h = current.size(2);
  const auto w = current.size(3);
  if (attention_override) {
    return torch::full({current.size(0), 1, h, w}, *attention_override,
                       current.options());
  }
  const auto gate = blocks::resize_to(att_up(up), h, w);
  return torch::sigmoid(att_out(torch::relu(att_current(current) + gate)));
}

torch::Tensor GuidedResidualModuleImpl::forward(const torch::Tensor& current,
                                                const torch::Tensor& up) {
  if (current.dim() != 4 || up.dim() != 4) {
    throw ValidationError("GRM: expected (N, C, H, W) inputs");
  }
  const auto h = current.size(2);
  const auto w = current.size(3);
  const bool same = up.size(2) == h && up.size(3) == w;
  const bool half = 2 * up.size(2) == h && 2 * up.size(3) == w;
  if (!same && !half) {
    throw ValidationError("GRM: up input " + std::to_string(up.size(2)) + "x" +
                          std::to_string(up.size(3)) +
                          " must be half (or equal to) the current resolution " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  const auto m = attention_map(current, up);
  const auto filtered = gf::attention_guided_filter(current, up_proj(up), m, spec_);
  auto z = filtered * (current * m);
  return out_conv(residual(z));
}

PlainMergeImpl::PlainMergeImpl(int64_t channels, int64_t up_channels) {
  conv = register_module("conv", fsg::conv(channels + up_channels, channels, 1));
  norm = register_module("norm", blocks::LayerNorm2d(channels));
}

torch::Tensor PlainMergeImpl::forward(const torch::Tensor& current,
                                      const torch::Tensor& up) {
  const auto u = blocks::resize_to(up, current.size(2), current.size(3));
  return torch::relu(norm(conv(torch::cat({current, u}, 1))));
}

// ---------------------------------------------------------------------------

FSGNetImpl::FSGNetImpl(const ModelConfig& cfg)
    : cfg_(cfg),
      compress(kNumStages, nullptr),
      grms_(kNumStages, nullptr),
      plain_(kNumStages, nullptr) {
  cfg_.validate();
  representation = register_module("representation", FeatureRepresentation(cfg_));
  for (int s = 1; s <= kNumStages; ++s) {
    const auto tag = std::to_string(s);
    const int i = s - 1;
    const int64_t g = cfg_.guided_width(s);
    const int64_t g_up = s < kNumStages ? cfg_.guided_width(s + 1) : g;
    compress[i] = register_module("compress" + tag, conv(cfg_.stage_width(s), g, 1));
    if (cfg_.toggles.grm) {
      grms_[i] = register_module("grm" + tag,
                                 GuidedResidualModule(g, g_up, cfg_.grm_spec));
    } else {
      plain_[i] = register_module("merge" + tag, PlainMerge(g, g_up));
    }
  }
  for (int d = 1; d <= cfg_.active_heads(); ++d) {
    heads.push_back(register_module("head" + std::to_string(d),
                                    conv(cfg_.guided_width(d), 1, 1)));
  }
}

GuidedResidualModule FSGNetImpl::grm(int s) {
  if (!cfg_.toggles.grm) throw ValidationError("GRM toggle is off");
  return grms_.at(static_cast<size_t>(s - 1));
}

std::vector<torch::Tensor> FSGNetImpl::forward_logits(const torch::Tensor& x) {
  const auto features = representation(x);
  std::array<torch::Tensor, kNumStages> out;
  for (int s = kNumStages; s >= 1; --s) {
    const int i = s - 1;
    const auto current = compress[i](features[i]);
    const auto& up = s < kNumStages ? out[i + 1] : current;
    out[i] = cfg_.toggles.grm ? grms_[i](current, up) : plain_[i](current, up);
  }
  std::vector<torch::Tensor> logits;
  for (size_t d = 0; d < heads.size(); ++d) logits.push_back(heads[d](out[d]));
  return logits;
}

PredictionSet FSGNetImpl::forward(const torch::Tensor& x) {
  PredictionSet set;
  for (auto& l : forward_logits(x)) set.preds.push_back(torch::sigmoid(l));
  return set;
}

FSGNet make_model(const ModelConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return FSGNet(cfg);
}

int64_t count_parameters(const ModelConfig& cfg) {
  torch::NoGradGuard no_grad;
  FSGNet net(cfg);
  return blocks::count_parameters(*net);
}

}  // namespace fsg
