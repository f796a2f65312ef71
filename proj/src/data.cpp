#include "fsgnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <opencv2/imgproc.hpp>

#include "fsgnet/errors.hpp"
#include "fsgnet/image_io.hpp"

namespace fs = std::filesystem;

namespace fsg::data {
namespace {

constexpr int kMultiple = 32;
constexpr int kHrfLongest = 1344;

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Files in `dir` whose (lower-cased) name ends with one of `suffixes`,
// sorted by name.
std::vector<fs::path> list_files(const fs::path& dir,
                                 const std::vector<std::string>& suffixes,
                                 const fs::path& root) {
  if (!fs::is_directory(dir)) {
    throw ValidationError("missing directory: " + fs::relative(dir, root).string() +
                          " under " + root.string());
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = lower(e.path().filename().string());
    for (const auto& s : suffixes) {
      if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
        out.push_back(e.path());
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// First existing candidate, else an error naming the first expected path.
fs::path expect_file(const fs::path& root, const std::vector<fs::path>& candidates) {
  for (const auto& c : candidates) {
    if (fs::is_regular_file(root / c)) return root / c;
  }
  throw ValidationError("missing file: expected " + candidates.front().string() +
                        " under " + root.string());
}

std::string strip_suffix(std::string name, const std::string& suffix) {
  const auto l = lower(name);
  if (l.size() >= suffix.size() &&
      l.compare(l.size() - suffix.size(), suffix.size(), suffix) == 0) {
    name.resize(name.size() - suffix.size());
  }
  return name;
}

SamplePair make_pair(const fs::path& image, const fs::path& mask, std::string id,
                     Dataset d) {
  SamplePair p;
  p.image = io::read_rgb(image);
  p.mask = binarize_mask(io::read_gray(mask), id);
  p.id = std::move(id);
  p.dataset = d;
  if (p.image.size() != p.mask.size()) {
    throw ValidationError("image/mask size mismatch for " + p.id + ": image " +
                          std::to_string(p.image.cols) + "x" +
                          std::to_string(p.image.rows) + ", mask " +
                          std::to_string(p.mask.cols) + "x" +
                          std::to_string(p.mask.rows));
  }
  return p;
}

std::vector<SamplePair> load_drive(const fs::path& root) {
  std::vector<SamplePair> out;
  for (const std::string part : {"training", "test"}) {
    const auto images = list_files(root / part / "images", {".tif", ".png"}, root);
    for (const auto& img : images) {
      const auto stem = img.stem().string();          // "21_training"
      const auto num = stem.substr(0, stem.find('_'));  // "21"
      const fs::path rel = fs::path(part) / "1st_manual";
      const auto mask = expect_file(
          root, {rel / (num + "_manual1.gif"), rel / (num + "_manual1.png"),
                 rel / (num + "_manual1.tif")});
      out.push_back(make_pair(img, mask, stem, Dataset::kDrive));
    }
  }
  return out;
}

std::vector<SamplePair> load_stare(const fs::path& root) {
  std::vector<SamplePair> out;
  for (const auto& img : list_files(root / "stare-images", {".ppm", ".ppm.gz"}, root)) {
    const auto id = strip_suffix(strip_suffix(img.filename().string(), ".gz"), ".ppm");
    const fs::path rel = "labels-ah";
    const auto mask = expect_file(
        root, {rel / (id + ".ah.ppm"), rel / (id + ".ah.ppm.gz")});
    out.push_back(make_pair(img, mask, id, Dataset::kStare));
  }
  return out;
}

std::vector<SamplePair> load_chase(const fs::path& root) {
  std::vector<SamplePair> out;
  for (const auto& img : list_files(root, {".jpg"}, root)) {
    const auto id = img.stem().string();  // "Image_01L"
    if (id.rfind("Image_", 0) != 0) continue;
    const auto mask = expect_file(root, {fs::path(id + "_1stHO.png")});
    out.push_back(make_pair(img, mask, id, Dataset::kChaseDb1));
  }
  return out;
}

std::vector<SamplePair> load_hrf(const fs::path& root) {
  std::vector<SamplePair> out;
  for (const auto& img : list_files(root / "images", {".jpg", ".jpeg"}, root)) {
    const auto id = img.stem().string();  // "01_dr"
    const fs::path rel = "manual1";
    const auto mask = expect_file(root, {rel / (id + ".tif"), rel / (id + ".png")});
    out.push_back(resize_longest(make_pair(img, mask, id, Dataset::kHrf), kHrfLongest));
  }
  return out;
}

}  // namespace

std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::kDrive: return "DRIVE";
    case Dataset::kStare: return "STARE";
    case Dataset::kChaseDb1: return "CHASE_DB1";
    case Dataset::kHrf: return "HRF";
  }
  return "?";
}

Dataset parse_dataset(std::string_view name) {
  const auto u = upper(name);
  if (u == "DRIVE" || u == "D") return Dataset::kDrive;
  if (u == "STARE" || u == "S") return Dataset::kStare;
  if (u == "CHASE_DB1" || u == "CHASE" || u == "C") return Dataset::kChaseDb1;
  if (u == "HRF" || u == "H") return Dataset::kHrf;
  throw ValidationError("unknown dataset '" + std::string(name) +
                        "'; valid names: DRIVE, STARE, CHASE_DB1, HRF");
}

void PaddingRecord::validate() const {
  if (orig_h < 1 || orig_w < 1) throw ValidationError("PaddingRecord: empty frame");
  if (pad_h < orig_h || pad_w < orig_w) {
    throw ValidationError("PaddingRecord: padded frame smaller than the original");
  }
  if (top != (pad_h - orig_h) / 2 || left != (pad_w - orig_w) / 2) {
    throw ValidationError("PaddingRecord: offsets are not centred");
  }
}

int padded_square(Dataset d) {
  switch (d) {
    case Dataset::kDrive: return 608;
    case Dataset::kStare: return 704;
    case Dataset::kChaseDb1: return 1024;
    case Dataset::kHrf: return 1344;
  }
  return 0;
}

PaddingRecord padding_to(int h, int w, int target_h, int target_w) {
  if (h < 1 || w < 1) throw ValidationError("center_pad: empty image");
  if (target_h < h || target_w < w) {
    throw ValidationError("center_pad: target " + std::to_string(target_h) + "x" +
                          std::to_string(target_w) + " is smaller than the image " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
  PaddingRecord r{h, w, target_h, target_w, (target_h - h) / 2, (target_w - w) / 2};
  return r;
}

PaddingRecord padding_for(int h, int w, std::optional<Dataset> d) {
  if (d) {
    const int s = padded_square(*d);
    return padding_to(h, w, s, s);
  }
  auto round_up = [](int v) { return (v + kMultiple - 1) / kMultiple * kMultiple; };
  return padding_to(h, w, round_up(h), round_up(w));
}

cv::Mat center_pad(const cv::Mat& image, const PaddingRecord& rec) {
  if (image.rows != rec.orig_h || image.cols != rec.orig_w) {
    throw ValidationError("center_pad: image does not match the padding record");
  }
  cv::Mat out;
  cv::copyMakeBorder(image, out, rec.top, rec.pad_h - rec.orig_h - rec.top, rec.left,
                     rec.pad_w - rec.orig_w - rec.left, cv::BORDER_CONSTANT,
                     cv::Scalar::all(0));
  return out;
}

std::pair<cv::Mat, PaddingRecord> center_pad(const cv::Mat& image,
                                             std::optional<Dataset> d) {
  const auto rec = padding_for(image.rows, image.cols, d);
  return {center_pad(image, rec), rec};
}

cv::Mat unpad(const cv::Mat& padded, const PaddingRecord& rec) {
  if (padded.rows != rec.pad_h || padded.cols != rec.pad_w) {
    throw ValidationError("unpad: map is " + std::to_string(padded.rows) + "x" +
                          std::to_string(padded.cols) + ", record expects " +
                          std::to_string(rec.pad_h) + "x" + std::to_string(rec.pad_w));
  }
  return padded(cv::Rect(rec.left, rec.top, rec.orig_w, rec.orig_h)).clone();
}

cv::Mat valid_region(const PaddingRecord& rec) {
  cv::Mat v(rec.pad_h, rec.pad_w, CV_8UC1, cv::Scalar(0));
  v(cv::Rect(rec.left, rec.top, rec.orig_w, rec.orig_h)).setTo(1);
  return v;
}

cv::Mat binarize_mask(const cv::Mat& raw, const std::string& id) {
  if (raw.empty()) throw ValidationError("empty mask for " + id);
  cv::Mat gray = raw;
  if (raw.channels() == 3) cv::cvtColor(raw, gray, cv::COLOR_RGB2GRAY);
  else if (raw.channels() == 4) cv::cvtColor(raw, gray, cv::COLOR_RGBA2GRAY);
  if (gray.type() != CV_8UC1) throw ValidationError("mask for " + id + " is not 8-bit");
  const bool binary = cv::countNonZero((gray != 0) & (gray != 255)) == 0;
  if (!binary) {
    throw ValidationError("mask for " + id + " has values outside {0, 255}");
  }
  cv::Mat out;
  cv::threshold(gray, out, 127, 1, cv::THRESH_BINARY);
  return out;
}

std::vector<SamplePair> load_dataset(const fs::path& root, Dataset d) {
  if (!fs::is_directory(root)) {
    throw ValidationError("dataset root does not exist: " + root.string());
  }
  std::vector<SamplePair> out;
  switch (d) {
    case Dataset::kDrive: out = load_drive(root); break;
    case Dataset::kStare: out = load_stare(root); break;
    case Dataset::kChaseDb1: out = load_chase(root); break;
    case Dataset::kHrf: out = load_hrf(root); break;
  }
  if (out.empty()) throw ValidationError("no images found for " + to_string(d) +
                                         " under " + root.string());
  std::sort(out.begin(), out.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.id < b.id; });
  return out;
}

Split split(std::vector<SamplePair> pairs, std::optional<Dataset> d) {
  std::sort(pairs.begin(), pairs.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.id < b.id; });
  Split s;
  if (d == Dataset::kDrive) {
    for (auto& p : pairs) {
      (p.id.find("_test") != std::string::npos ? s.val : s.train).push_back(std::move(p));
    }
    return s;
  }
  const size_t n_train = (pairs.size() + 1) / 2;
  for (size_t i = 0; i < pairs.size(); ++i) {
    (i < n_train ? s.train : s.val).push_back(std::move(pairs[i]));
  }
  return s;
}

SamplePair resize_longest(const SamplePair& p, int longest) {
  const int h = p.image.rows;
  const int w = p.image.cols;
  if (std::max(h, w) == longest) return p;
  const double f = static_cast<double>(longest) / std::max(h, w);
  const cv::Size size(std::max(1, static_cast<int>(std::lround(w * f))),
                      std::max(1, static_cast<int>(std::lround(h * f))));
  SamplePair out = p;
  cv::resize(p.image, out.image, size, 0, 0, cv::INTER_LINEAR);
  cv::Mat m;
  p.mask.convertTo(m, CV_32F);
  cv::resize(m, m, size, 0, 0, cv::INTER_LINEAR);
  cv::Mat bin = m >= 0.5f;
  bin.convertTo(out.mask, CV_8U, 1.0 / 255.0);
  return out;
}

}  // namespace fsg::data
