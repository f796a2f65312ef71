#pragma once

#include <torch/torch.h>

namespace fsg::gf {

// Square window of side 2*radius+1 and the filter regularizer.
struct WindowSpec {
  int radius = 2;
  double regularizer_eps = 1e-2;

  void validate() const;
  bool operator==(const WindowSpec&) const = default;
};

// Per-pixel linear coefficients (a_k, b_k) of the window centred at each
// pixel, and their window averages.
struct CoefficientField {
  torch::Tensor a;
  torch::Tensor b;
  torch::Tensor a_bar;
  torch::Tensor b_bar;
};

// All maps are tensors of rank >= 2 whose last two dimensions are spatial.
// Windows are clipped at the borders and normalized by the number of
// in-bounds pixels.
torch::Tensor box_mean(const torch::Tensor& x, int radius);

// Number of in-bounds pixels of every clipped window, shape (h, w).
torch::Tensor window_count(int64_t h, int64_t w, int radius,
                           const torch::TensorOptions& options = torch::kDouble);

CoefficientField guided_coefficients(const torch::Tensor& guide,
                                     const torch::Tensor& input,
                                     const WindowSpec& spec);

// Same as above with a per-pixel regularizer map broadcastable to the input.
CoefficientField guided_coefficients(const torch::Tensor& guide,
                                     const torch::Tensor& input, int radius,
                                     const torch::Tensor& eps_map);

// Classical guided filter: out_i = a_bar_i * guide_i + b_bar_i.
torch::Tensor guided_filter(const torch::Tensor& guide,
                            const torch::Tensor& input,
                            const WindowSpec& spec);

// out = alpha * (x - G_sigma * x) + x, Gaussian truncated at 3 sigma and
// renormalized over the in-bounds taps.
torch::Tensor unsharp_mask(const torch::Tensor& x, double alpha, double sigma);

/// Closed-form minimizer, per window w_k, of
///
///   E(a, b) = sum_{i in w_k} M_i^2 (a * I_i + b - g_i)^2 + eps * a^2
///
/// With W = sum M^2 and the M^2-weighted means mu, g_hat:
///
///   a = (sum M^2 I g - W mu g_hat) / (sum M^2 I^2 - W mu^2 + eps)
///   b = g_hat - a mu
///
/// Windows with W < 1e-8 give (0, 0). Windows whose denominator vanishes
/// (flat guide with eps = 0) give a = 0, b = g_hat.
///
/// `attention` must lie in [0, 1]; it may have a single channel, in which case
/// it is shared by every channel of `guide` and `target`.
CoefficientField attention_guided_coefficients(const torch::Tensor& guide,
                                               const torch::Tensor& target,
                                               const torch::Tensor& attention,
                                               const WindowSpec& spec);

/// Attention-guided filter used inside the guided residual module.
///
/// `guide_hi` is (N, C, H, W); `input_lo` is (N, C, H/2, W/2) or (N, C, H, W);
/// `attention` is (N, 1 or C, H, W). The guide is bilinearly downsampled to the
/// resolution of `input_lo`, coefficients are solved there, their window
/// averages are bilinearly upsampled and applied to `guide_hi`.
torch::Tensor attention_guided_filter(const torch::Tensor& guide_hi,
                                      const torch::Tensor& input_lo,
                                      const torch::Tensor& attention,
                                      const WindowSpec& spec);

}  // namespace fsg::gf
