#pragma once

#include <vector>

#include <torch/torch.h>

#include "fsgnet/network.hpp"

namespace fsg::loss {

// Per-head weights of the deep-supervision objective.
struct SupervisionWeights {
  std::vector<double> alpha{1.0, 1.0, 1.0};
  double lambda = 1.0;
  double dice_eps = 1.0;
  double clamp_delta = 1e-7;

  void validate(size_t heads) const;
};

// -(1/S) sum[y log p + (1-y) log(1-p)], p clamped to [delta, 1-delta].
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target,
                       double clamp_delta = 1e-7);

// 1 - (2 sum(y p) + eps) / (sum y + sum p + eps)
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target,
                        double dice_eps = 1.0);

// Level 0 is the mask itself; level d is the bilinear 1/2^d downsample of the
// mask re-binarized at 0.5. `mask` is (N, 1, H, W).
std::vector<torch::Tensor> label_pyramid(const torch::Tensor& mask, size_t levels);

// sum_d alpha_d (BCE_d + lambda Dice_d) against the label pyramid of `mask`.
torch::Tensor deep_supervision_loss(const PredictionSet& preds,
                                    const torch::Tensor& mask,
                                    const SupervisionWeights& w);

}  // namespace fsg::loss
