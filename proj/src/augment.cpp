#include "fsgnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <opencv2/imgproc.hpp>

#include "fsgnet/errors.hpp"

namespace fsg::data {
namespace {

bool coin(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) {
  if (hi <= lo) return lo;
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError(std::string("AugmentationConfig: ") + name + " must lie in [0, 1]");
  }
}

// Bilinear warp of the mask followed by re-binarization at 0.5.
cv::Mat warp_mask(const cv::Mat& mask, const std::function<void(const cv::Mat&, cv::Mat&)>& op) {
  cv::Mat f;
  mask.convertTo(f, CV_32F);
  cv::Mat warped;
  op(f, warped);
  cv::Mat bin = warped >= 0.5f;
  cv::Mat out;
  bin.convertTo(out, CV_8U, 1.0 / 255.0);
  return out;
}

SamplePair random_resize(const SamplePair& p, const AugmentationConfig& cfg, Rng& rng) {
  double s = uniform(rng, cfg.resize_min, cfg.resize_max);
  // Never shrink below the crop unless the source is already smaller.
  const double floor = static_cast<double>(cfg.crop) / std::min(p.image.rows, p.image.cols);
  s = std::max(s, std::min(1.0, floor));
  const cv::Size size(std::max(1, static_cast<int>(std::lround(p.image.cols * s))),
                      std::max(1, static_cast<int>(std::lround(p.image.rows * s))));
  if (size == p.image.size()) return p;
  SamplePair out = p;
  cv::resize(p.image, out.image, size, 0, 0, cv::INTER_LINEAR);
  out.mask = warp_mask(p.mask, [&](const cv::Mat& in, cv::Mat& dst) {
    cv::resize(in, dst, size, 0, 0, cv::INTER_LINEAR);
  });
  return out;
}

SamplePair crop(const SamplePair& p, const AugmentationConfig& cfg, Rng& rng) {
  const int c = cfg.crop;
  SamplePair src = p;
  // Zero-pad sources smaller than the crop.
  const int ph = std::max(0, c - p.image.rows);
  const int pw = std::max(0, c - p.image.cols);
  if (ph > 0 || pw > 0) {
    cv::copyMakeBorder(p.image, src.image, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2,
                       cv::BORDER_CONSTANT, cv::Scalar::all(0));
    cv::copyMakeBorder(p.mask, src.mask, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2,
                       cv::BORDER_CONSTANT, cv::Scalar::all(0));
  }
  const int max_y = src.image.rows - c;
  const int max_x = src.image.cols - c;
  int y = max_y / 2;
  int x = max_x / 2;
  if (coin(rng, cfg.crop_random_prob)) {
    y = uniform_int(rng, 0, max_y);
    x = uniform_int(rng, 0, max_x);
  }
  const cv::Rect r(x, y, c, c);
  SamplePair out = p;
  out.image = src.image(r).clone();
  out.mask = src.mask(r).clone();
  return out;
}

SamplePair perspective(const SamplePair& p, double scale, Rng& rng) {
  const float w = static_cast<float>(p.image.cols);
  const float h = static_cast<float>(p.image.rows);
  const double dx = scale * w / 2.0;
  const double dy = scale * h / 2.0;
  auto jx = [&] { return static_cast<float>(uniform(rng, 0.0, dx)); };
  auto jy = [&] { return static_cast<float>(uniform(rng, 0.0, dy)); };
  const cv::Point2f src[4] = {{0, 0}, {w - 1, 0}, {w - 1, h - 1}, {0, h - 1}};
  cv::Point2f dst[4];
  dst[0] = {jx(), jy()};
  dst[1] = {w - 1 - jx(), jy()};
  dst[2] = {w - 1 - jx(), h - 1 - jy()};
  dst[3] = {jx(), h - 1 - jy()};
  const cv::Mat m = cv::getPerspectiveTransform(src, dst);
  SamplePair out = p;
  cv::warpPerspective(p.image, out.image, m, p.image.size(), cv::INTER_LINEAR,
                      cv::BORDER_CONSTANT, cv::Scalar::all(0));
  out.mask = warp_mask(p.mask, [&](const cv::Mat& in, cv::Mat& d) {
    cv::warpPerspective(in, d, m, in.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                        cv::Scalar::all(0));
  });
  return out;
}

cv::Mat blur(const cv::Mat& image, const AugmentationConfig& cfg, Rng& rng) {
  const int k = cfg.blur_kernels[static_cast<size_t>(
      uniform_int(rng, 0, static_cast<int>(cfg.blur_kernels.size()) - 1))];
  const double sigma = uniform(rng, cfg.blur_sigma_min, cfg.blur_sigma_max);
  cv::Mat out;
  cv::GaussianBlur(image, out, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT_101);
  return out;
}

cv::Mat gray_of(const cv::Mat& rgb) {
  cv::Mat g;
  cv::cvtColor(rgb, g, cv::COLOR_RGB2GRAY);
  cv::Mat g3;
  cv::cvtColor(g, g3, cv::COLOR_GRAY2RGB);
  return g3;
}

// Brightness, contrast, saturation and hue in a fixed order on [0, 1] floats.
cv::Mat jitter(const cv::Mat& image, const AugmentationConfig& cfg, Rng& rng) {
  cv::Mat f;
  image.convertTo(f, CV_32FC3, 1.0 / 255.0);
  auto clamp01 = [](cv::Mat& m) {
    cv::min(m, 1.0, m);
    cv::max(m, 0.0, m);
  };
  const double b = uniform(rng, std::max(0.0, 1 - cfg.jitter_brightness), 1 + cfg.jitter_brightness);
  const double c = uniform(rng, std::max(0.0, 1 - cfg.jitter_contrast), 1 + cfg.jitter_contrast);
  const double s = uniform(rng, std::max(0.0, 1 - cfg.jitter_saturation), 1 + cfg.jitter_saturation);
  const double h = uniform(rng, -cfg.jitter_hue, cfg.jitter_hue);

  f *= b;
  clamp01(f);
  {
    cv::Mat g;
    cv::cvtColor(f, g, cv::COLOR_RGB2GRAY);
    const double mean = cv::mean(g)[0];
    f = f * c + cv::Scalar::all((1 - c) * mean);
    clamp01(f);
  }
  {
    cv::Mat g3 = gray_of(f);
    f = f * s + g3 * (1 - s);
    clamp01(f);
  }
  if (h != 0.0) {
    cv::Mat hsv;
    cv::cvtColor(f, hsv, cv::COLOR_RGB2HSV);  // H in [0, 360)
    std::vector<cv::Mat> ch;
    cv::split(hsv, ch);
    ch[0] += h * 360.0;
    ch[0].forEach<float>([](float& v, const int*) {
      v = std::fmod(v, 360.0f);
      if (v < 0) v += 360.0f;
    });
    cv::merge(ch, hsv);
    cv::cvtColor(hsv, f, cv::COLOR_HSV2RGB);
    clamp01(f);
  }
  cv::Mat out;
  f.convertTo(out, CV_8UC3, 255.0);
  return out;
}

}  // namespace

void AugmentationConfig::validate() const {
  if (blur_kernels.empty()) throw ValidationError("AugmentationConfig: no blur kernels");
  for (int k : blur_kernels) {
    if (k < 1 || k % 2 == 0) throw ValidationError("AugmentationConfig: blur kernels must be odd");
  }
  check_prob(blur_prob, "blur prob");
  check_prob(jitter_prob, "jitter prob");
  check_prob(hflip_prob, "hflip prob");
  check_prob(perspective_prob, "perspective prob");
  check_prob(resize_prob, "resize prob");
  check_prob(crop_random_prob, "crop random prob");
  check_prob(cutmix_prob, "cutmix prob");
  if (!(blur_sigma_min > 0 && blur_sigma_min <= blur_sigma_max)) {
    throw ValidationError("AugmentationConfig: blur sigma range invalid");
  }
  if (jitter_brightness < 0 || jitter_contrast < 0 || jitter_saturation < 0 ||
      jitter_hue < 0 || jitter_hue > 0.5) {
    throw ValidationError("AugmentationConfig: jitter strengths invalid");
  }
  if (perspective_scale < 0 || perspective_scale > 1) {
    throw ValidationError("AugmentationConfig: perspective scale must lie in [0, 1]");
  }
  if (!(resize_min > 0 && resize_min <= resize_max)) {
    throw ValidationError("AugmentationConfig: resize range invalid");
  }
  if (crop < 1) throw ValidationError("AugmentationConfig: crop must be positive");
  if (cutmix_n < 0) throw ValidationError("AugmentationConfig: cutmix n must be >= 0");
  if (!(cutmix_area_min >= 0 && cutmix_area_min <= cutmix_area_max && cutmix_area_max <= 1)) {
    throw ValidationError("AugmentationConfig: cutmix area range invalid");
  }
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.blur_prob = 0;
  c.jitter_prob = 0;
  c.hflip_prob = 0;
  c.perspective_prob = 0;
  c.resize_prob = 0;
  c.crop_random_prob = 0;
  c.cutmix_prob = 0;
  return c;
}

SamplePair hflip(const SamplePair& pair) {
  SamplePair out = pair;
  cv::flip(pair.image, out.image, 1);
  cv::flip(pair.mask, out.mask, 1);
  return out;
}

SamplePair augment(const SamplePair& pair, const AugmentationConfig& cfg, Rng& rng) {
  cfg.validate();
  if (pair.image.empty() || pair.image.size() != pair.mask.size()) {
    throw ValidationError("augment: image and mask must be non-empty and equally sized");
  }
  SamplePair p = pair;
  if (coin(rng, cfg.resize_prob)) p = random_resize(p, cfg, rng);
  p = crop(p, cfg, rng);
  if (coin(rng, cfg.hflip_prob)) p = hflip(p);
  if (coin(rng, cfg.perspective_prob)) p = perspective(p, cfg.perspective_scale, rng);
  if (coin(rng, cfg.blur_prob)) p.image = blur(p.image, cfg, rng);
  if (coin(rng, cfg.jitter_prob)) p.image = jitter(p.image, cfg, rng);
  return p;
}

SamplePair cutmix_region(const SamplePair& a, const SamplePair& b, const cv::Rect& region) {
  if (a.image.size() != b.image.size() || a.mask.size() != b.mask.size()) {
    throw ValidationError("cutmix: both samples must share one size");
  }
  SamplePair out = a;
  out.image = a.image.clone();
  out.mask = a.mask.clone();
  const cv::Rect r = region & cv::Rect(0, 0, a.image.cols, a.image.rows);
  if (r.area() == 0) return out;
  b.image(r).copyTo(out.image(r));
  b.mask(r).copyTo(out.mask(r));
  return out;
}

SamplePair cutmix(const SamplePair& a, const SamplePair& b, const AugmentationConfig& cfg,
                  Rng& rng) {
  if (!coin(rng, cfg.cutmix_prob)) return cutmix_region(a, b, cv::Rect());
  SamplePair out = a;
  const int h = a.image.rows;
  const int w = a.image.cols;
  for (int i = 0; i < cfg.cutmix_n; ++i) {
    const double ratio = uniform(rng, cfg.cutmix_area_min, cfg.cutmix_area_max);
    const int rh = std::clamp(static_cast<int>(std::lround(h * std::sqrt(ratio))), 0, h);
    const int rw = std::clamp(static_cast<int>(std::lround(w * std::sqrt(ratio))), 0, w);
    const int y = uniform_int(rng, 0, h - rh);
    const int x = uniform_int(rng, 0, w - rw);
    out = cutmix_region(out, b, cv::Rect(x, y, rw, rh));
  }
  return out;
}

Rng sample_rng(uint64_t seed, uint64_t index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace fsg::data
