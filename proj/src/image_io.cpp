#include "fsgnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <zlib.h>

#include "fsgnet/errors.hpp"

namespace fs = std::filesystem;

namespace fsg::io {
namespace {

std::string lower_ext(const fs::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

bool is_gif(std::span<const uint8_t> b) {
  return b.size() >= 6 && b[0] == 'G' && b[1] == 'I' && b[2] == 'F';
}

// Decoded image in RGB or single channel order, always 8-bit.
cv::Mat decode_any(const fs::path& path) {
  auto bytes = read_file(path);
  if (lower_ext(path) == ".gz") bytes = gunzip(bytes);
  if (is_gif(bytes)) return decode_gif(bytes);

  cv::Mat raw = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw ValidationError("cannot decode image: " + path.string());
  if (raw.depth() == CV_16U) raw.convertTo(raw, CV_8U, 1.0 / 257.0);
  else if (raw.depth() != CV_8U) raw.convertTo(raw, CV_8U);
  if (raw.channels() == 4) cv::cvtColor(raw, raw, cv::COLOR_BGRA2RGB);
  else if (raw.channels() == 3) cv::cvtColor(raw, raw, cv::COLOR_BGR2RGB);
  return raw;
}

}  // namespace

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<uint8_t> gunzip(std::span<const uint8_t> bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw ValidationError("gunzip: init failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<uint8_t> out;
  std::vector<uint8_t> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ValidationError("gunzip: corrupt stream");
    }
    out.insert(out.end(), chunk.begin(),
               chunk.begin() + static_cast<std::ptrdiff_t>(chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw ValidationError("gunzip: truncated stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

cv::Mat read_rgb(const fs::path& path) {
  cv::Mat m = decode_any(path);
  if (m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2RGB);
  return m;
}

cv::Mat read_gray(const fs::path& path) {
  cv::Mat m = decode_any(path);
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2GRAY);
  return m;
}

void write_gray(const fs::path& path, const cv::Mat& image) {
  if (image.type() != CV_8UC1) throw ValidationError("write_gray: expected 8-bit single channel");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), image)) {
    throw ValidationError("cannot write image: " + path.string());
  }
}

}  // namespace fsg::io
