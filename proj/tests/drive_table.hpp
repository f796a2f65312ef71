#pragma once

#include <string>
#include <vector>

namespace fsg::testing {

struct PublishedRow {
  std::string model;
  double values[6];  // mIoU, F1, Acc, AUC, Sen, MCC
};

// DRIVE comparison block as printed, FSG-Net last.
inline std::vector<PublishedRow> drive_block() {
  return {
      {"U-Net", {83.857, 82.956, 97.013, 97.853, 83.449, 81.456}},
      {"U-Net++", {81.228, 79.564, 96.524, 96.271, 77.802, 77.830}},
      {"U-Net3+ Deep", {83.909, 83.030, 97.017, 98.082, 83.721, 81.520}},
      {"ResU-Net", {83.862, 82.953, 97.021, 97.766, 83.226, 81.453}},
      {"ResU-Net++", {83.729, 82.783, 97.001, 97.708, 82.791, 81.263}},
      {"SAU-Net", {83.368, 82.334, 96.925, 97.616, 82.311, 80.782}},
      {"DCASU-Net", {83.743, 82.808, 96.996, 97.838, 83.080, 81.290}},
      {"AG-Net", {83.176, 82.111, 96.882, 97.628, 82.155, 80.540}},
      {"AttU-Net", {83.958, 83.080, 97.039, 97.844, 83.422, 81.584}},
      {"R2U-Net", {83.555, 82.580, 96.952, 97.879, 82.961, 81.038}},
      {"ConvU-NeXt", {83.800, 82.882, 97.012, 97.835, 83.019, 81.367}},
      {"FR-UNet", {83.884, 82.995, 97.007, 98.158, 83.869, 81.485}},
      {"HRNet", {83.938, 83.829, 97.325, 97.860, 82.963, 81.506}},
      {"FSG-Net", {84.068, 83.229, 97.042, 98.235, 84.207, 81.731}},
  };
}

// Published Rank Avg column for the rows above.
inline std::vector<double> drive_rank_avg() {
  return {5.7, 14.0, 3.5, 6.5, 10.2, 12.2, 8.7, 12.8, 3.5, 9.7, 7.8, 4.3, 5.0, 1.2};
}

// The printed HRNet F1 (83.829) contradicts its own Rank Avg; 82.829 is
// consistent with every published rank in the block.
inline std::vector<PublishedRow> drive_block_corrected() {
  auto rows = drive_block();
  rows[12].values[1] = 82.829;
  return rows;
}

inline std::vector<std::vector<double>> as_table(const std::vector<PublishedRow>& rows) {
  std::vector<std::vector<double>> t;
  for (const auto& r : rows) t.emplace_back(r.values, r.values + 6);
  return t;
}

}  // namespace fsg::testing
