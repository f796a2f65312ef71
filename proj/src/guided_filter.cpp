#include "fsgnet/guided_filter.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fsgnet/errors.hpp"

namespace F = torch::nn::functional;

namespace fsg::gf {
namespace {

void require_spatial(const torch::Tensor& x, const char* name) {
  if (!x.defined() || x.dim() < 2) {
    throw ValidationError(std::string(name) + ": expected a map of rank >= 2");
  }
}

void require_finite(const torch::Tensor& x, const char* name) {
  if (!torch::isfinite(x).all().item<bool>()) {
    throw NonFiniteError(std::string(name) + ": non-finite values");
  }
}

std::string shape_str(const torch::Tensor& x) {
  std::ostringstream os;
  os << x.sizes();
  return os.str();
}

// View any map as (B, 1, H, W) so pooling/convolution runs per plane.
torch::Tensor as_planes(const torch::Tensor& x) {
  const auto h = x.size(-2);
  const auto w = x.size(-1);
  return x.reshape({-1, 1, h, w});
}

double machine_eps(const torch::Tensor& x) {
  return x.scalar_type() == torch::kDouble
             ? std::numeric_limits<double>::epsilon()
             : static_cast<double>(std::numeric_limits<float>::epsilon());
}

torch::Tensor box_mean_unchecked(const torch::Tensor& x, int radius) {
  const int64_t k = 2 * radius + 1;
  auto y = F::avg_pool2d(as_planes(x), F::AvgPool2dFuncOptions(k)
                                           .stride(1)
                                           .padding(radius)
                                           .count_include_pad(false));
  return y.reshape(x.sizes());
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t h, int64_t w) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

void WindowSpec::validate() const {
  if (radius < 1) {
    throw ValidationError("WindowSpec: radius must be >= 1, got " +
                          std::to_string(radius));
  }
  if (!(regularizer_eps >= 0.0) || !std::isfinite(regularizer_eps)) {
    throw ValidationError("WindowSpec: regularizer_eps must be finite and >= 0");
  }
}

torch::Tensor box_mean(const torch::Tensor& x, int radius) {
  require_spatial(x, "box_mean");
  if (radius < 1) throw ValidationError("box_mean: radius must be >= 1");
  require_finite(x, "box_mean");
  return box_mean_unchecked(x, radius);
}

torch::Tensor window_count(int64_t h, int64_t w, int radius,
                           const torch::TensorOptions& options) {
  auto axis = [radius](int64_t n) {
    std::vector<double> c(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const int64_t lo = std::max<int64_t>(0, i - radius);
      const int64_t hi = std::min<int64_t>(n - 1, i + radius);
      c[static_cast<size_t>(i)] = static_cast<double>(hi - lo + 1);
    }
    return torch::tensor(c, torch::kDouble);
  };
  return torch::outer(axis(h), axis(w)).to(options);
}

CoefficientField guided_coefficients(const torch::Tensor& guide,
                                     const torch::Tensor& input, int radius,
                                     const torch::Tensor& eps_map) {
  require_spatial(guide, "guided_filter guide");
  require_spatial(input, "guided_filter input");
  if (guide.sizes() != input.sizes()) {
    throw ValidationError("guided_filter: guide " + shape_str(guide) +
                          " and input " + shape_str(input) +
                          " differ in shape");
  }
  if (radius < 1) throw ValidationError("guided_filter: radius must be >= 1");
  require_finite(guide, "guided_filter guide");
  require_finite(input, "guided_filter input");

  auto box = [radius](const torch::Tensor& t) {
    return box_mean_unchecked(t, radius);
  };
  const auto mu = box(guide);
  const auto p_bar = box(input);
  const auto var = box(guide * guide) - mu * mu;
  const auto cov = box(guide * input) - mu * p_bar;
  const auto denom = var + eps_map;

  const double tol = 16.0 * machine_eps(guide);
  const auto flat = denom <= tol * box(guide * guide) + 1e-300;
  const auto safe = torch::where(flat, torch::ones_like(denom), denom);
  auto a = torch::where(flat, torch::zeros_like(cov), cov / safe);
  auto b = p_bar - a * mu;

  CoefficientField field;
  field.a_bar = box(a);
  field.b_bar = box(b);
  field.a = std::move(a);
  field.b = std::move(b);
  return field;
}

CoefficientField guided_coefficients(const torch::Tensor& guide,
                                     const torch::Tensor& input,
                                     const WindowSpec& spec) {
  spec.validate();
  auto eps = torch::full({}, spec.regularizer_eps, guide.options());
  return guided_coefficients(guide, input, spec.radius, eps);
}

torch::Tensor guided_filter(const torch::Tensor& guide,
                            const torch::Tensor& input,
                            const WindowSpec& spec) {
  const auto field = guided_coefficients(guide, input, spec);
  return field.a_bar * guide + field.b_bar;
}

torch::Tensor unsharp_mask(const torch::Tensor& x, double alpha, double sigma) {
  require_spatial(x, "unsharp_mask");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("unsharp_mask: sigma must be > 0");
  }
  if (!std::isfinite(alpha)) throw ValidationError("unsharp_mask: alpha must be finite");
  require_finite(x, "unsharp_mask");

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps;
  for (int k = -radius; k <= radius; ++k) {
    taps.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
  }
  const auto kernel = torch::tensor(taps, x.options());
  const int64_t n = static_cast<int64_t>(taps.size());
  const auto kx = kernel.view({1, 1, 1, n});
  const auto ky = kernel.view({1, 1, n, 1});

  auto smooth = [&](const torch::Tensor& planes) {
    auto t = F::conv2d(planes, kx, F::Conv2dFuncOptions().padding({0, radius}));
    return F::conv2d(t, ky, F::Conv2dFuncOptions().padding({radius, 0}));
  };
  const auto planes = as_planes(x);
  const auto weight = smooth(torch::ones_like(planes.slice(0, 0, 1)));
  const auto blurred = (smooth(planes) / weight).reshape(x.sizes());
  return alpha * (x - blurred) + x;
}

CoefficientField attention_guided_coefficients(const torch::Tensor& guide,
                                               const torch::Tensor& target,
                                               const torch::Tensor& attention,
                                               const WindowSpec& spec) {
  spec.validate();
  require_spatial(guide, "attention_guided_coefficients guide");
  require_spatial(target, "attention_guided_coefficients target");
  require_spatial(attention, "attention_guided_coefficients attention");
  if (guide.sizes() != target.sizes()) {
    throw ValidationError("attention_guided_coefficients: guide " +
                          shape_str(guide) + " and target " +
                          shape_str(target) + " differ in shape");
  }
  if (attention.size(-1) != guide.size(-1) ||
      attention.size(-2) != guide.size(-2)) {
    throw ValidationError("attention_guided_coefficients: attention " +
                          shape_str(attention) + " does not match guide " +
                          shape_str(guide) + " spatially");
  }
  require_finite(guide, "attention_guided_coefficients guide");
  require_finite(target, "attention_guided_coefficients target");
  if (!((attention >= 0) & (attention <= 1)).all().item<bool>()) {
    throw ValidationError(
        "attention_guided_coefficients: attention must lie in [0, 1]");
  }

  const int r = spec.radius;
  auto box = [r](const torch::Tensor& t) { return box_mean_unchecked(t, r); };

  const auto m2 = attention * attention;
  const auto count =
      window_count(guide.size(-2), guide.size(-1), r, guide.options());

  // Window means of the weighted moments; multiplying by `count` turns them
  // into the window sums of the energy.
  const auto w = box(m2);
  const auto w_sum = w * count;
  const auto degenerate = w_sum < 1e-8;
  const auto w_safe = torch::where(degenerate, torch::ones_like(w), w);

  const auto mu = box(m2 * guide) / w_safe;
  const auto g_hat = box(m2 * target) / w_safe;
  const auto sum_ig = box(m2 * guide * target) * count;
  const auto sum_ii = box(m2 * guide * guide) * count;

  const auto num = sum_ig - w_sum * mu * g_hat;
  const auto den = sum_ii - w_sum * mu * mu + spec.regularizer_eps;

  const double tol = 16.0 * machine_eps(guide);
  const auto flat = den <= tol * sum_ii + 1e-300;
  const auto den_safe = torch::where(flat, torch::ones_like(den), den);

  const auto zero_a = degenerate | flat;
  auto a = torch::where(zero_a, torch::zeros_like(num), num / den_safe);
  auto b = torch::where(degenerate, torch::zeros_like(g_hat), g_hat - a * mu);

  CoefficientField field;
  field.a_bar = box(a);
  field.b_bar = box(b);
  field.a = std::move(a);
  field.b = std::move(b);
  return field;
}

torch::Tensor attention_guided_filter(const torch::Tensor& guide_hi,
                                      const torch::Tensor& input_lo,
                                      const torch::Tensor& attention,
                                      const WindowSpec& spec) {
  if (guide_hi.dim() != 4 || input_lo.dim() != 4 || attention.dim() != 4) {
    throw ValidationError("attention_guided_filter: expected (N, C, H, W) maps");
  }
  if (guide_hi.size(1) != input_lo.size(1)) {
    throw ValidationError("attention_guided_filter: guide has " +
                          std::to_string(guide_hi.size(1)) +
                          " channels but input has " +
                          std::to_string(input_lo.size(1)));
  }
  if (guide_hi.size(0) != input_lo.size(0)) {
    throw ValidationError("attention_guided_filter: batch size mismatch");
  }
  if (attention.size(1) != 1 && attention.size(1) != guide_hi.size(1)) {
    throw ValidationError(
        "attention_guided_filter: attention must have 1 or C channels");
  }
  const auto h = guide_hi.size(2);
  const auto w = guide_hi.size(3);
  if (attention.size(2) != h || attention.size(3) != w) {
    throw ValidationError("attention_guided_filter: attention " +
                          shape_str(attention) + " must match guide " +
                          shape_str(guide_hi) + " spatially");
  }
  const auto hl = input_lo.size(2);
  const auto wl = input_lo.size(3);
  const bool same = (hl == h && wl == w);
  const bool half = (2 * hl == h && 2 * wl == w);
  if (!same && !half) {
    throw ValidationError("attention_guided_filter: input " +
                          shape_str(input_lo) +
                          " must be at the guide resolution or half of it " +
                          shape_str(guide_hi));
  }

  if (same) {
    const auto field =
        attention_guided_coefficients(guide_hi, input_lo, attention, spec);
    return field.a_bar * guide_hi + field.b_bar;
  }

  const auto guide_lo = resize_bilinear(guide_hi, hl, wl);
  const auto attention_lo = resize_bilinear(attention, hl, wl);
  const auto field =
      attention_guided_coefficients(guide_lo, input_lo, attention_lo, spec);
  const auto a_up = resize_bilinear(field.a_bar, h, w);
  const auto b_up = resize_bilinear(field.b_bar, h, w);
  return a_up * guide_hi + b_up;
}

}  // namespace fsg::gf
