#include "scenesynth/io.h"

#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "scenesynth/binary_io.h"

namespace scenesynth::io {

void savePointCloud(const std::string& path, const geometry::PointCloud& cloud) {
  cloud.validate();
  BinaryWriter w(path);
  w.magic("PSPC");
  w.put<uint32_t>(1);
  w.put<uint32_t>(static_cast<uint32_t>(cloud.size()));
  for (size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) w.put<float>(cloud.positions[i][k]);
    w.put<uint8_t>(cloud.colors[i].r);
    w.put<uint8_t>(cloud.colors[i].g);
    w.put<uint8_t>(cloud.colors[i].b);
    w.put<uint16_t>(cloud.source[i]);
  }
  w.finish();
}

geometry::PointCloud loadPointCloud(const std::string& path) {
  BinaryReader r(path);
  r.expectMagic("PSPC");
  SS_CHECK(r.get<uint32_t>() == 1, path + ": unsupported point cloud version");
  const uint32_t n = r.get<uint32_t>();
  geometry::PointCloud cloud;
  cloud.positions.reserve(n);
  cloud.colors.reserve(n);
  cloud.source.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Eigen::Vector3f p;
    for (int k = 0; k < 3; ++k) p[k] = r.get<float>();
    Rgb8 c;
    c.r = r.get<uint8_t>();
    c.g = r.get<uint8_t>();
    c.b = r.get<uint8_t>();
    cloud.positions.push_back(p);
    cloud.colors.push_back(c);
    cloud.source.push_back(r.get<uint16_t>());
  }
  r.expectEnd();
  cloud.validate();
  return cloud;
}

namespace {

std::vector<uint8_t> encode(const cv::Mat& mat) {
  std::vector<uint8_t> bytes;
  SS_CHECK(cv::imencode(".png", mat, bytes), "PNG encoding failed");
  return bytes;
}

cv::Mat decode(const std::vector<uint8_t>& bytes, int flags) {
  SS_CHECK(!bytes.empty(), "PNG decoding failed: empty input");
  cv::Mat mat = cv::imdecode(bytes, flags);
  SS_CHECK(!mat.empty(), "PNG decoding failed");
  return mat;
}

}  // namespace

std::vector<uint8_t> encodePng(const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      const Rgb8 px = toRgb8(image(r, c));
      mat.at<cv::Vec3b>(r, c) = cv::Vec3b(px.b, px.g, px.r);
    }
  }
  return encode(mat);
}

Image decodePng(const std::vector<uint8_t>& bytes) {
  const cv::Mat mat = decode(bytes, cv::IMREAD_COLOR);
  SS_CHECK(mat.type() == CV_8UC3, "expected an 8-bit color PNG");
  Image image(mat.rows, mat.cols);
  for (int r = 0; r < mat.rows; ++r) {
    for (int c = 0; c < mat.cols; ++c) {
      const cv::Vec3b px = mat.at<cv::Vec3b>(r, c);
      image(r, c) = fromRgb8({px[2], px[1], px[0]});
    }
  }
  return image;
}

std::vector<uint8_t> encodeDepthPng(const geometry::DepthMap& depth) {
  depth.validate();
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1, cv::Scalar(0));
  for (int r = 0; r < depth.height(); ++r) {
    for (int c = 0; c < depth.width(); ++c) {
      if (!depth.valid(r, c)) continue;
      const double mm = std::round(depth.values(r, c) * 1000.0);
      SS_CHECK(mm >= 1 && mm <= 65535, "depth outside the 16-bit millimeter range");
      mat.at<uint16_t>(r, c) = static_cast<uint16_t>(mm);
    }
  }
  return encode(mat);
}

geometry::DepthMap decodeDepthPng(const std::vector<uint8_t>& bytes) {
  const cv::Mat mat = decode(bytes, cv::IMREAD_ANYDEPTH);
  SS_CHECK(mat.type() == CV_16UC1, "expected a 16-bit grayscale depth PNG");
  geometry::DepthMap depth(mat.rows, mat.cols);
  for (int r = 0; r < mat.rows; ++r) {
    for (int c = 0; c < mat.cols; ++c) {
      const uint16_t mm = mat.at<uint16_t>(r, c);
      if (mm == 0) continue;
      depth.values(r, c) = mm / 1000.0;
      depth.valid(r, c) = 1;
    }
  }
  return depth;
}

std::vector<uint8_t> readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SS_CHECK(in.good(), "cannot open for reading: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void writeFile(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  SS_CHECK(out.good(), "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  SS_CHECK(out.good(), "write failed: " + path);
}

void writePng(const std::string& path, const Image& image) { writeFile(path, encodePng(image)); }
Image readPng(const std::string& path) { return decodePng(readFile(path)); }
void writeDepthPng(const std::string& path, const geometry::DepthMap& depth) {
  writeFile(path, encodeDepthPng(depth));
}
geometry::DepthMap readDepthPng(const std::string& path) { return decodeDepthPng(readFile(path)); }

}  // namespace scenesynth::io
