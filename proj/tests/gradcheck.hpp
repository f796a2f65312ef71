#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include <torch/torch.h>

namespace fsg::testing {

struct GradCheck {
  double rel_error = 0;
  double analytic_norm = 0;
  int64_t coordinates = 0;
};

// Central finite differences of a scalar function against autograd. The
// relative error is ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||) over
// every coordinate of every input. Inputs must be double tensors.
inline GradCheck gradcheck(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& f,
                           std::vector<torch::Tensor> inputs, double step = 1e-4) {
  for (auto& x : inputs) x = x.detach().clone().set_requires_grad(true);
  auto out = f(inputs);
  auto grads = torch::autograd::grad({out}, inputs, {}, false, false, true);

  double diff2 = 0, ga2 = 0, gf2 = 0;
  GradCheck r;
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> probe;
  for (auto& x : inputs) probe.push_back(x.detach().clone());
  for (size_t k = 0; k < probe.size(); ++k) {
    auto flat = probe[k].view(-1);
    auto ga = grads[k].defined() ? grads[k].reshape(-1) : torch::zeros_like(flat);
    auto acc = ga.accessor<double, 1>();
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + step;
      const double up = f(probe).item<double>();
      flat[i] = orig - step;
      const double down = f(probe).item<double>();
      flat[i] = orig;
      const double fd = (up - down) / (2 * step);
      const double a = acc[i];
      diff2 += (a - fd) * (a - fd);
      ga2 += a * a;
      gf2 += fd * fd;
      ++r.coordinates;
    }
  }
  const double denom = std::max(std::sqrt(ga2), std::sqrt(gf2));
  r.rel_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
  r.analytic_norm = std::sqrt(ga2);
  return r;
}

// Fixed random projection so the scalar objective has no symmetric cancellation.
inline torch::Tensor weighted_sum(const torch::Tensor& y, uint64_t seed = 99) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto w = torch::randn(y.sizes(), gen, torch::dtype(torch::kDouble));
  return (y * w).sum();
}

}  // namespace fsg::testing
