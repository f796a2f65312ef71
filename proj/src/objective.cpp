#include "fsgnet/objective.hpp"

#include <cmath>
#include <sstream>

#include "fsgnet/errors.hpp"

namespace F = torch::nn::functional;

namespace fsg::loss {
namespace {

void check_pair(const torch::Tensor& pred, const torch::Tensor& target,
                const char* name) {
  if (!pred.defined() || !target.defined() || pred.sizes() != target.sizes()) {
    std::ostringstream os;
    os << name << ": prediction " << (pred.defined() ? pred.sizes() : c10::IntArrayRef{})
       << " and target " << (target.defined() ? target.sizes() : c10::IntArrayRef{})
       << " differ in shape";
    throw ValidationError(os.str());
  }
}

}  // namespace

void SupervisionWeights::validate(size_t heads) const {
  if (alpha.size() != heads) {
    throw ValidationError("SupervisionWeights: " + std::to_string(alpha.size()) +
                          " head weights for " + std::to_string(heads) + " heads");
  }
  bool any_positive = false;
  for (double a : alpha) {
    if (!(a >= 0.0)) throw ValidationError("SupervisionWeights: alpha must be >= 0");
    any_positive |= a > 0.0;
  }
  if (!any_positive) throw ValidationError("SupervisionWeights: all alpha are zero");
  if (!(lambda >= 0.0)) throw ValidationError("SupervisionWeights: lambda must be >= 0");
  if (!(dice_eps > 0.0)) throw ValidationError("SupervisionWeights: dice_eps must be > 0");
  if (!(clamp_delta > 0.0 && clamp_delta < 0.5)) {
    throw ValidationError("SupervisionWeights: clamp_delta must lie in (0, 0.5)");
  }
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target,
                       double clamp_delta) {
  check_pair(pred, target, "bce_loss");
  const auto p = pred.clamp(clamp_delta, 1.0 - clamp_delta);
  const auto y = target.to(p.scalar_type());
  return -(y * torch::log(p) + (1.0 - y) * torch::log(1.0 - p)).mean();
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target,
                        double dice_eps) {
  check_pair(pred, target, "dice_loss");
  const auto y = target.to(pred.scalar_type());
  const auto inter = (y * pred).sum();
  return 1.0 - (2.0 * inter + dice_eps) / (y.sum() + pred.sum() + dice_eps);
}

std::vector<torch::Tensor> label_pyramid(const torch::Tensor& mask, size_t levels) {
  if (mask.dim() != 4) throw ValidationError("label_pyramid: mask must be (N, 1, H, W)");
  std::vector<torch::Tensor> out{mask};
  const auto m = mask.to(torch::kFloat);
  for (size_t d = 1; d < levels; ++d) {
    const int64_t h = mask.size(2) >> d;
    const int64_t w = mask.size(3) >> d;
    if (h < 1 || w < 1 || (h << d) != mask.size(2) || (w << d) != mask.size(3)) {
      throw ValidationError("label_pyramid: mask size not divisible by 2^" +
                            std::to_string(d));
    }
    auto down = F::interpolate(m, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{h, w})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    out.push_back((down >= 0.5).to(mask.scalar_type()));
  }
  return out;
}

torch::Tensor deep_supervision_loss(const PredictionSet& preds,
                                    const torch::Tensor& mask,
                                    const SupervisionWeights& w) {
  const size_t heads = preds.preds.size();
  if (heads == 0) throw ValidationError("deep_supervision_loss: no prediction heads");
  w.validate(heads);
  const auto pyramid = label_pyramid(mask, heads);
  torch::Tensor total;
  for (size_t d = 0; d < heads; ++d) {
    const auto& p = preds.preds[d];
    const auto y = pyramid[d].to(p.scalar_type());
    auto term = bce_loss(p, y, w.clamp_delta);
    if (w.lambda != 0.0) term = term + w.lambda * dice_loss(p, y, w.dice_eps);
    term = w.alpha[d] * term;
    total = total.defined() ? total + term : term;
  }
  return total;
}

}  // namespace fsg::loss
