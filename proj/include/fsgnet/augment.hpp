#pragma once

#include <array>
#include <random>
#include <vector>

#include <opencv2/core.hpp>

#include "fsgnet/data.hpp"

namespace fsg::data {

struct AugmentationConfig {
  // Gaussian blur of the image; kernel drawn from `blur_kernels`.
  std::vector<int> blur_kernels{3, 5, 7, 9, 11};
  double blur_prob = 0.8;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  double jitter_brightness = 0.2;
  double jitter_contrast = 0.2;
  double jitter_saturation = 0.2;
  double jitter_hue = 0.1;
  double jitter_prob = 0.8;

  double hflip_prob = 0.5;

  double perspective_scale = 0.3;
  double perspective_prob = 0.3;

  double resize_min = 0.5;
  double resize_max = 2.0;
  double resize_prob = 0.8;

  int crop = 288;
  // Probability the crop window is placed at random (else centred).
  double crop_random_prob = 1.0;

  int cutmix_n = 1;
  double cutmix_prob = 0.8;
  double cutmix_area_min = 0.1;
  double cutmix_area_max = 0.5;

  void validate() const;
  bool operator==(const AugmentationConfig&) const = default;
  // Every random operation off: augment reduces to a centre crop.
  static AugmentationConfig disabled();
};

using Rng = std::mt19937_64;

// resize -> crop -> hflip -> perspective -> blur -> jitter. Geometric steps
// act on image and mask alike; the mask is re-binarized after interpolation.
SamplePair augment(const SamplePair& pair, const AugmentationConfig& cfg, Rng& rng);

// Pastes `b` into `a` over `region` (image and mask together).
SamplePair cutmix_region(const SamplePair& a, const SamplePair& b, const cv::Rect& region);

// With probability cutmix_prob pastes cutmix_n random rectangles of `b` into
// `a`, each covering a uniform fraction of the area in the configured range.
SamplePair cutmix(const SamplePair& a, const SamplePair& b, const AugmentationConfig& cfg,
                  Rng& rng);

SamplePair hflip(const SamplePair& pair);

// Independent stream for sample `index` under `seed`.
Rng sample_rng(uint64_t seed, uint64_t index);

}  // namespace fsg::data
