#include <array>
#include <string>

#include "fsgnet/errors.hpp"
#include "fsgnet/image_io.hpp"

namespace fsg::io {
namespace {

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : bytes_(b) {}

  uint8_t u8() {
    if (pos_ >= bytes_.size()) throw ValidationError("gif: truncated stream");
    return bytes_[pos_++];
  }
  uint16_t u16() {
    const uint16_t lo = u8();
    return static_cast<uint16_t>(lo | (u8() << 8));
  }
  void skip(size_t n) {
    if (pos_ + n > bytes_.size()) throw ValidationError("gif: truncated stream");
    pos_ += n;
  }
  // Concatenated payload of a sub-block chain.
  std::vector<uint8_t> sub_blocks() {
    std::vector<uint8_t> out;
    for (uint8_t len = u8(); len != 0; len = u8()) {
      if (pos_ + len > bytes_.size()) throw ValidationError("gif: truncated stream");
      out.insert(out.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                 bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
      pos_ += len;
    }
    return out;
  }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

using Palette = std::vector<std::array<uint8_t, 3>>;

Palette read_palette(Reader& r, int bits) {
  Palette p(size_t{1} << bits);
  for (auto& c : p) c = {r.u8(), r.u8(), r.u8()};
  return p;
}

std::vector<uint8_t> lzw_decode(const std::vector<uint8_t>& data, int min_code_size,
                                size_t pixel_count) {
  if (min_code_size < 2 || min_code_size > 8) {
    throw ValidationError("gif: invalid LZW code size");
  }
  const int clear = 1 << min_code_size;
  const int end = clear + 1;

  std::vector<uint16_t> prefix(4096);
  std::vector<uint8_t> suffix(4096);
  std::vector<uint8_t> first(4096);
  for (int i = 0; i < clear; ++i) {
    prefix[i] = 0xFFFF;
    suffix[i] = static_cast<uint8_t>(i);
    first[i] = static_cast<uint8_t>(i);
  }

  std::vector<uint8_t> out;
  out.reserve(pixel_count);
  std::vector<uint8_t> stack;

  int code_size = min_code_size + 1;
  int next = end + 1;
  int prev = -1;
  uint32_t bit_buf = 0;
  int bit_count = 0;
  size_t byte_pos = 0;

  auto emit = [&](int code) {
    stack.clear();
    for (int c = code; c != 0xFFFF; c = prefix[c]) stack.push_back(suffix[c]);
    out.insert(out.end(), stack.rbegin(), stack.rend());
  };

  while (out.size() < pixel_count) {
    while (bit_count < code_size) {
      if (byte_pos >= data.size()) return out;
      bit_buf |= static_cast<uint32_t>(data[byte_pos++]) << bit_count;
      bit_count += 8;
    }
    const int code = static_cast<int>(bit_buf & ((1u << code_size) - 1));
    bit_buf >>= code_size;
    bit_count -= code_size;

    if (code == clear) {
      code_size = min_code_size + 1;
      next = end + 1;
      prev = -1;
      continue;
    }
    if (code == end) break;
    if (prev < 0) {
      if (code >= clear) throw ValidationError("gif: corrupt LZW stream");
      emit(code);
      prev = code;
      continue;
    }
    if (code < next) {
      emit(code);
      if (next < 4096) {
        prefix[next] = static_cast<uint16_t>(prev);
        suffix[next] = first[code];
        first[next] = first[prev];
        ++next;
      }
    } else if (code == next && next < 4096) {
      prefix[next] = static_cast<uint16_t>(prev);
      suffix[next] = first[prev];
      first[next] = first[prev];
      ++next;
      emit(code);
    } else {
      throw ValidationError("gif: corrupt LZW stream");
    }
    if (next == (1 << code_size) && code_size < 12) ++code_size;
    prev = code;
  }
  return out;
}

}  // namespace

cv::Mat decode_gif(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  std::string sig;
  for (int i = 0; i < 6; ++i) sig.push_back(static_cast<char>(r.u8()));
  if (sig != "GIF87a" && sig != "GIF89a") throw ValidationError("gif: bad signature");

  const int width = r.u16();
  const int height = r.u16();
  const uint8_t flags = r.u8();
  r.skip(2);  // background index, aspect ratio
  Palette global;
  if (flags & 0x80) global = read_palette(r, (flags & 0x07) + 1);

  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar::all(0));
  for (;;) {
    const uint8_t block = r.u8();
    if (block == 0x3B) break;  // trailer
    if (block == 0x21) {       // extension
      r.u8();
      r.sub_blocks();
      continue;
    }
    if (block != 0x2C) throw ValidationError("gif: unexpected block");

    const int left = r.u16();
    const int top = r.u16();
    const int w = r.u16();
    const int h = r.u16();
    const uint8_t iflags = r.u8();
    Palette local;
    if (iflags & 0x80) local = read_palette(r, (iflags & 0x07) + 1);
    const Palette& pal = local.empty() ? global : local;
    if (pal.empty()) throw ValidationError("gif: no colour table");
    const bool interlaced = (iflags & 0x40) != 0;

    const int min_code = r.u8();
    const auto indices =
        lzw_decode(r.sub_blocks(), min_code, static_cast<size_t>(w) * h);

    std::vector<int> rows;
    if (interlaced) {
      for (int y = 0; y < h; y += 8) rows.push_back(y);
      for (int y = 4; y < h; y += 8) rows.push_back(y);
      for (int y = 2; y < h; y += 4) rows.push_back(y);
      for (int y = 1; y < h; y += 2) rows.push_back(y);
    } else {
      for (int y = 0; y < h; ++y) rows.push_back(y);
    }
    for (size_t k = 0; k < indices.size(); ++k) {
      const int row = rows[k / static_cast<size_t>(w)];
      const int y = top + row;
      const int x = left + static_cast<int>(k % static_cast<size_t>(w));
      if (y >= height || x >= width) continue;
      const auto& c = pal[std::min<size_t>(indices[k], pal.size() - 1)];
      canvas.at<cv::Vec3b>(y, x) = {c[0], c[1], c[2]};
    }
    break;  // first frame only
  }
  return canvas;
}

}  // namespace fsg::io
