#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>

namespace fsg::data {

enum class Dataset { kDrive, kStare, kChaseDb1, kHrf };

std::string to_string(Dataset d);
Dataset parse_dataset(std::string_view name);  // DRIVE, STARE, CHASE_DB1, HRF

struct SamplePair {
  cv::Mat image;  // CV_8UC3, RGB
  cv::Mat mask;   // CV_8UC1, values {0, 1}
  std::string id;
  std::optional<Dataset> dataset;
};

struct PaddingRecord {
  int orig_h = 0;
  int orig_w = 0;
  int pad_h = 0;
  int pad_w = 0;
  int top = 0;
  int left = 0;

  void validate() const;
  bool operator==(const PaddingRecord&) const = default;
};

// Side of the square each benchmark is centre-padded to.
int padded_square(Dataset d);

// Centre padding of an h x w frame to target_h x target_w.
PaddingRecord padding_to(int h, int w, int target_h, int target_w);
// Dataset square when known, else each side rounded up to a multiple of 32.
PaddingRecord padding_for(int h, int w, std::optional<Dataset> d);

cv::Mat center_pad(const cv::Mat& image, const PaddingRecord& rec);
std::pair<cv::Mat, PaddingRecord> center_pad(const cv::Mat& image,
                                             std::optional<Dataset> d);
cv::Mat unpad(const cv::Mat& padded, const PaddingRecord& rec);
// CV_8UC1 map of the padded frame, 1 inside the original region.
cv::Mat valid_region(const PaddingRecord& rec);

// Flattens colour masks by luminance and requires values in {0, 255}; returns
// a {0, 1} map.
cv::Mat binarize_mask(const cv::Mat& raw, const std::string& id);

// Pairs images with first-observer annotations in each benchmark's published
// layout, sorted by id. HRF is downscaled so its longer side is 1344.
std::vector<SamplePair> load_dataset(const std::filesystem::path& root, Dataset d);

struct Split {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
};

// DRIVE: official training/test folders. Others: first half (rounded up) of
// the sorted ids trains, the rest validates.
Split split(std::vector<SamplePair> pairs, std::optional<Dataset> d);

// Resize so the longer side equals `longest` (bilinear; mask re-binarized).
SamplePair resize_longest(const SamplePair& p, int longest);

}  // namespace fsg::data
