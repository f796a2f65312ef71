#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

namespace fsg::io {

// Decodes the first frame of a GIF87a/GIF89a stream into an 8-bit RGB image.
cv::Mat decode_gif(std::span<const uint8_t> bytes);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
std::vector<uint8_t> gunzip(std::span<const uint8_t> bytes);

// 8-bit RGB image. Understands every OpenCV raster format plus GIF and
// gzip-compressed files (*.gz).
cv::Mat read_rgb(const std::filesystem::path& path);

// 8-bit single-channel image; colour sources are flattened by luminance.
cv::Mat read_gray(const std::filesystem::path& path);

// Writes an 8-bit single-channel raster (format from the extension).
void write_gray(const std::filesystem::path& path, const cv::Mat& image);

}  // namespace fsg::io
