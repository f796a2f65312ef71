#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fsgnet/augment.hpp"
#include "fsgnet/data.hpp"
#include "fsgnet/errors.hpp"
#include "fsgnet/image_io.hpp"

namespace fs = std::filesystem;
using namespace fsg;
using namespace fsg::data;

namespace {

const fs::path kData = FSGNET_TEST_DATA;

bool same(const cv::Mat& a, const cv::Mat& b) {
  return a.size() == b.size() && a.type() == b.type() &&
         cv::countNonZero(a.reshape(1) != b.reshape(1)) == 0;
}

cv::Mat reference_rgb(const fs::path& p) {
  cv::Mat bgr = cv::imread(p.string(), cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

// Vessel-like sample whose image encodes the mask in every channel.
SamplePair mask_as_image(int h, int w, uint64_t seed) {
  std::mt19937 rng(static_cast<uint32_t>(seed));
  cv::Mat m(h, w, CV_8UC1, cv::Scalar(0));
  for (int k = 0; k < 6; ++k) {
    const cv::Point a(rng() % w, rng() % h), b(rng() % w, rng() % h);
    cv::line(m, a, b, cv::Scalar(1), 3 + static_cast<int>(rng() % 4));
  }
  SamplePair p;
  cv::Mat g = m * 255;
  cv::cvtColor(g, p.image, cv::COLOR_GRAY2RGB);
  p.mask = m;
  p.id = "synthetic";
  return p;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fsgnet_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_pair(const fs::path& image, const fs::path& mask, int h, int w, int seed) {
  fs::create_directories(image.parent_path());
  fs::create_directories(mask.parent_path());
  auto s = mask_as_image(h, w, seed);
  cv::Mat bgr;
  cv::cvtColor(s.image, bgr, cv::COLOR_RGB2BGR);
  REQUIRE(cv::imwrite(image.string(), bgr));
  REQUIRE(cv::imwrite(mask.string(), s.mask * 255));
}

}  // namespace

TEST_CASE("dataset names") {
  CHECK(parse_dataset("drive") == Dataset::kDrive);
  CHECK(parse_dataset("C") == Dataset::kChaseDb1);
  CHECK(parse_dataset("chase_db1") == Dataset::kChaseDb1);
  CHECK(parse_dataset("HRF") == Dataset::kHrf);
  CHECK(to_string(Dataset::kStare) == "STARE");
  CHECK_THROWS_AS(parse_dataset("kitti"), ValidationError);
}

TEST_CASE("centre padding records") {
  const auto r = padding_for(584, 565, Dataset::kDrive);
  CHECK(r == PaddingRecord{584, 565, 608, 608, 12, 21});
  CHECK_NOTHROW(r.validate());

  const auto same_size = padding_for(96, 96, std::nullopt);
  CHECK(same_size == PaddingRecord{96, 96, 96, 96, 0, 0});
  CHECK(padding_for(97, 33, std::nullopt) == PaddingRecord{97, 33, 128, 64, 15, 15});
  CHECK(padded_square(Dataset::kHrf) == 1344);
  CHECK_THROWS_AS(padding_for(700, 600, Dataset::kDrive), ValidationError);
  CHECK_THROWS_AS((PaddingRecord{10, 10, 12, 12, 0, 1}).validate(), ValidationError);
}

TEST_CASE("pad then unpad is the identity") {
  std::mt19937 rng(9);
  std::uniform_int_distribution<int> side(1, 90);
  for (int t = 0; t < 100; ++t) {
    const int h = side(rng), w = side(rng);
    cv::Mat img(h, w, CV_8UC3);
    cv::randu(img, 0, 256);
    auto [padded, rec] = center_pad(img, std::nullopt);
    REQUIRE(padded.rows % 32 == 0);
    REQUIRE(padded.cols % 32 == 0);
    REQUIRE(same(unpad(padded, rec), img));
    // Padding is zero and the valid map covers exactly the original.
    const cv::Mat v = valid_region(rec);
    REQUIRE(cv::countNonZero(v) == h * w);
    cv::Mat outside;
    cv::cvtColor(padded, outside, cv::COLOR_RGB2GRAY);
    outside.setTo(0, v);
    REQUIRE(cv::countNonZero(outside) == 0);
  }
  const auto rec = padding_for(20, 20, std::nullopt);
  CHECK_THROWS_AS(unpad(cv::Mat(31, 32, CV_8UC1), rec), ValidationError);
  CHECK_THROWS_AS(center_pad(cv::Mat(21, 20, CV_8UC1), rec), ValidationError);
}

TEST_CASE("mask binarization") {
  cv::Mat m = (cv::Mat_<uint8_t>(2, 2) << 0, 255, 255, 0);
  cv::Mat expect = (cv::Mat_<uint8_t>(2, 2) << 0, 1, 1, 0);
  CHECK(same(binarize_mask(m, "x"), expect));
  cv::Mat rgb;
  cv::cvtColor(m, rgb, cv::COLOR_GRAY2RGB);
  CHECK(same(binarize_mask(rgb, "x"), expect));
  m.at<uint8_t>(0, 0) = 128;
  CHECK_THROWS_WITH_AS(binarize_mask(m, "im0042"), doctest::Contains("im0042"),
                       ValidationError);
}

TEST_CASE("split conventions") {
  std::vector<SamplePair> drive;
  for (auto id : {"22_training", "01_test", "21_training", "02_test"}) {
    drive.push_back({cv::Mat(), cv::Mat(), id, Dataset::kDrive});
  }
  auto s = split(drive, Dataset::kDrive);
  REQUIRE(s.train.size() == 2);
  CHECK(s.train[0].id == "21_training");
  CHECK(s.val[0].id == "01_test");

  std::vector<SamplePair> seven;
  for (int i = 7; i >= 1; --i) seven.push_back({cv::Mat(), cv::Mat(), "im" + std::to_string(i), {}});
  s = split(seven, Dataset::kStare);
  CHECK(s.train.size() == 4);
  CHECK(s.val.size() == 3);
  CHECK(s.train.front().id == "im1");
  CHECK(s.val.front().id == "im5");
}

TEST_CASE("GIF decoding matches reference rasters") {
  const cv::Mat color = reference_rgb(kData / "color.ppm");
  const cv::Mat mask = cv::imread((kData / "mask.pgm").string(), cv::IMREAD_GRAYSCALE);
  REQUIRE(!color.empty());
  for (auto name : {"color.gif", "color_interlaced.gif"}) {
    CAPTURE(name);
    const auto bytes = io::read_file(kData / name);
    CHECK(same(io::decode_gif(bytes), color));
    CHECK(same(io::read_rgb(kData / name), color));
  }
  for (auto name : {"mask.gif", "mask_interlaced.gif"}) {
    CAPTURE(name);
    CHECK(same(io::read_gray(kData / name), mask));
  }
  auto bytes = io::read_file(kData / "mask.gif");
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(io::decode_gif(bytes), ValidationError);
  const std::vector<uint8_t> junk{'G', 'I', 'F', '8'};
  CHECK_THROWS_AS(io::decode_gif(junk), ValidationError);
}

TEST_CASE("gzip decoding") {
  const cv::Mat mask = cv::imread((kData / "mask.pgm").string(), cv::IMREAD_GRAYSCALE);
  CHECK(io::gunzip(io::read_file(kData / "mask.pgm.gz")) == io::read_file(kData / "mask.pgm"));
  CHECK(same(io::read_gray(kData / "mask.pgm.gz"), mask));
  const std::vector<uint8_t> junk{0x1f, 0x8b, 8, 0, 1, 2, 3};
  CHECK_THROWS_AS(io::gunzip(junk), ValidationError);
}

TEST_CASE("loaders read the published layouts") {
  TempDir tmp;
  SUBCASE("DRIVE") {
    const auto root = tmp.path / "DRIVE";
    write_pair(root / "training/images/21_training.png", root / "training/1st_manual/21_manual1.png", 40, 30, 1);
    write_pair(root / "training/images/22_training.png", root / "training/1st_manual/22_manual1.png", 40, 30, 2);
    write_pair(root / "test/images/01_test.png", root / "test/1st_manual/01_manual1.png", 40, 30, 3);
    const auto all = load_dataset(root, Dataset::kDrive);
    REQUIRE(all.size() == 3);
    CHECK(all[0].id == "01_test");
    CHECK(all[1].image.type() == CV_8UC3);
    const auto expect = mask_as_image(40, 30, 1);
    CHECK(same(all[1].mask, expect.mask));
    CHECK(same(all[1].image, expect.image));
    const auto s = split(all, Dataset::kDrive);
    CHECK(s.train.size() == 2);
    CHECK(s.val.size() == 1);

    fs::remove(root / "test/1st_manual/01_manual1.png");
    CHECK_THROWS_WITH_AS(load_dataset(root, Dataset::kDrive),
                         doctest::Contains("test/1st_manual/01_manual1.gif"), ValidationError);
  }
  SUBCASE("STARE with gzip labels") {
    const auto root = tmp.path / "STARE";
    fs::create_directories(root / "stare-images");
    fs::create_directories(root / "labels-ah");
    cv::Mat img = reference_rgb(kData / "color.ppm");
    cv::Mat bgr;
    cv::cvtColor(img, bgr, cv::COLOR_RGB2BGR);
    REQUIRE(cv::imwrite((root / "stare-images/im0001.ppm").string(), bgr));
    fs::copy_file(kData / "mask.pgm.gz", root / "labels-ah/im0001.ah.ppm.gz");
    const auto all = load_dataset(root, Dataset::kStare);
    REQUIRE(all.size() == 1);
    CHECK(all[0].id == "im0001");
    CHECK(same(all[0].image, img));
    const cv::Mat mask = cv::imread((kData / "mask.pgm").string(), cv::IMREAD_GRAYSCALE);
    CHECK(same(all[0].mask, mask / 255));
  }
  SUBCASE("CHASE_DB1 size mismatch names the sample") {
    const auto root = tmp.path / "CHASE";
    write_pair(root / "Image_01L.jpg", root / "Image_01L_1stHO.png", 20, 20, 4);
    CHECK(load_dataset(root, Dataset::kChaseDb1).size() == 1);
    cv::imwrite((root / "Image_01L_1stHO.png").string(), cv::Mat(21, 20, CV_8UC1, cv::Scalar(0)));
    CHECK_THROWS_WITH_AS(load_dataset(root, Dataset::kChaseDb1), doctest::Contains("Image_01L"),
                         ValidationError);
  }
  SUBCASE("HRF is resized to a 1344 long side") {
    const auto root = tmp.path / "HRF";
    write_pair(root / "images/01_dr.jpg", root / "manual1/01_dr.png", 84, 126, 5);
    const auto all = load_dataset(root, Dataset::kHrf);
    REQUIRE(all.size() == 1);
    CHECK(all[0].image.cols == 1344);
    CHECK(all[0].image.rows == 896);
    CHECK(all[0].mask.size() == all[0].image.size());
    double lo, hi;
    cv::minMaxLoc(all[0].mask, &lo, &hi);
    CHECK(hi == 1.0);
  }
  SUBCASE("missing root") {
    CHECK_THROWS_AS(load_dataset(tmp.path / "nope", Dataset::kHrf), ValidationError);
    CHECK_THROWS_WITH_AS(load_dataset(tmp.path, Dataset::kStare),
                         doctest::Contains("stare-images"), ValidationError);
  }
}

TEST_CASE("disabled augmentation is a centre crop") {
  const auto p = mask_as_image(100, 90, 7);
  auto cfg = AugmentationConfig::disabled();
  cfg.crop = 64;
  Rng rng(1);
  const auto out = augment(p, cfg, rng);
  CHECK(same(out.image, p.image(cv::Rect(13, 18, 64, 64))));
  CHECK(same(out.mask, p.mask(cv::Rect(13, 18, 64, 64))));

  // Sources smaller than the crop are zero padded.
  const auto small = mask_as_image(40, 50, 8);
  const auto big = augment(small, cfg, rng);
  CHECK(big.image.rows == 64);
  CHECK(same(big.mask(cv::Rect(7, 12, 50, 40)), small.mask));
  CHECK(cv::countNonZero(big.mask) == cv::countNonZero(small.mask));
}

TEST_CASE("augmentation properties") {
  const auto p = mask_as_image(320, 300, 11);
  const AugmentationConfig cfg;
  CHECK(same(hflip(hflip(p)).image, p.image));

  for (uint64_t k = 0; k < 20; ++k) {
    auto r1 = sample_rng(5, k), r2 = sample_rng(5, k);
    const auto a = augment(p, cfg, r1);
    const auto b = augment(p, cfg, r2);
    REQUIRE(same(a.image, b.image));
    REQUIRE(same(a.mask, b.mask));
    REQUIRE(a.image.rows == 288);
    REQUIRE(a.image.cols == 288);
    REQUIRE(a.mask.type() == CV_8UC1);
    double lo, hi;
    cv::minMaxLoc(a.mask, &lo, &hi);
    REQUIRE(hi <= 1.0);
  }
  auto r1 = sample_rng(5, 0), r2 = sample_rng(6, 0);
  CHECK(!same(augment(p, cfg, r1).image, augment(p, cfg, r2).image));

  // With photometric steps off, the geometric path moves image and mask alike.
  auto geo = cfg;
  geo.blur_prob = 0;
  geo.jitter_prob = 0;
  geo.resize_prob = 1;
  geo.perspective_prob = 1;
  for (uint64_t k = 0; k < 10; ++k) {
    auto rng = sample_rng(3, k);
    const auto a = augment(p, geo, rng);
    cv::Mat g;
    cv::cvtColor(a.image, g, cv::COLOR_RGB2GRAY);
    const cv::Mat from_image = g > 127;
    const cv::Mat from_mask = a.mask > 0;
    const int differ = cv::countNonZero(from_image != from_mask);
    CAPTURE(k);
    REQUIRE(differ <= 0.01 * a.mask.total());
  }

  auto bad = cfg;
  bad.blur_kernels = {4};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.hflip_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("cutmix pastes whole rectangles") {
  auto a = mask_as_image(64, 64, 1);
  SamplePair b;
  b.image = cv::Mat(64, 64, CV_8UC3, cv::Scalar(7, 8, 9));
  b.mask = cv::Mat(64, 64, CV_8UC1, cv::Scalar(1));

  CHECK(same(cutmix_region(a, b, cv::Rect(0, 0, 64, 64)).image, b.image));
  CHECK(same(cutmix_region(a, b, cv::Rect()).image, a.image));
  const auto part = cutmix_region(a, b, cv::Rect(10, 20, 5, 6));
  CHECK(same(part.mask(cv::Rect(10, 20, 5, 6)), b.mask(cv::Rect(10, 20, 5, 6))));
  CHECK(cv::countNonZero(part.image.reshape(1) != a.image.reshape(1)) <= 5 * 6 * 3);

  AugmentationConfig cfg;
  cfg.cutmix_prob = 1;
  for (uint64_t k = 0; k < 20; ++k) {
    auto rng = sample_rng(1, k);
    const auto m = cutmix(a, b, cfg, rng);
    // Every pixel comes from one of the two sources, image and mask together.
    int from_b = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const bool is_b = m.image.at<cv::Vec3b>(y, x) == cv::Vec3b(7, 8, 9);
        if (is_b) {
          ++from_b;
          REQUIRE(m.mask.at<uint8_t>(y, x) == 1);
        } else {
          REQUIRE(m.image.at<cv::Vec3b>(y, x) == a.image.at<cv::Vec3b>(y, x));
          REQUIRE(m.mask.at<uint8_t>(y, x) == a.mask.at<uint8_t>(y, x));
        }
      }
    }
    REQUIRE(from_b >= 0.09 * 64 * 64);
    REQUIRE(from_b <= 0.51 * 64 * 64);
  }
  cfg.cutmix_prob = 0;
  auto rng = sample_rng(1, 0);
  CHECK(same(cutmix(a, b, cfg, rng).image, a.image));
  SamplePair c{cv::Mat(32, 32, CV_8UC3), cv::Mat(32, 32, CV_8UC1), "c", {}};
  CHECK_THROWS_AS(cutmix_region(a, c, cv::Rect(0, 0, 4, 4)), ValidationError);
}
