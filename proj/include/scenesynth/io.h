#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenesynth/geometry.h"
#include "scenesynth/image.h"

namespace scenesynth::io {

// "PSPC", u32 version, u32 N, then per point 3 f32 position, 3 u8 color, u16 source.
void savePointCloud(const std::string& path, const geometry::PointCloud& cloud);
geometry::PointCloud loadPointCloud(const std::string& path);

// 8-bit RGB PNG; colors are rounded to the nearest 1/255.
std::vector<uint8_t> encodePng(const Image& image);
Image decodePng(const std::vector<uint8_t>& bytes);
void writePng(const std::string& path, const Image& image);
Image readPng(const std::string& path);

// 16-bit grayscale PNG of depth in millimeters; 0 marks invalid pixels.
std::vector<uint8_t> encodeDepthPng(const geometry::DepthMap& depth);
geometry::DepthMap decodeDepthPng(const std::vector<uint8_t>& bytes);
void writeDepthPng(const std::string& path, const geometry::DepthMap& depth);
geometry::DepthMap readDepthPng(const std::string& path);

std::vector<uint8_t> readFile(const std::string& path);
void writeFile(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace scenesynth::io
