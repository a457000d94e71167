#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "camstyle/data.hpp"

namespace camstyle {

ImageF resize_bilinear(const ImageF& src, int out_h, int out_w) {
  if (src.empty() || out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: empty size");
  if (src.height == out_h && src.width == out_w) return src;
  ImageF out(out_h, out_w);
  // Each channel is a contiguous row-major plane.
  for (int c = 0; c < 3; ++c) {
    const cv::Mat plane(src.height, src.width, CV_32F, const_cast<float*>(src.pixels.col(c).data()));
    cv::Mat dst(out_h, out_w, CV_32F, out.pixels.col(c).data());
    cv::resize(plane, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

}  // namespace camstyle

namespace camstyle::data {

ImageF read_image(const std::filesystem::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + file.string());
  ImageF img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0f;
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

void write_image(const std::filesystem::path& file, const ImageF& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  auto q = [](float v) { return cv::saturate_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      row[x] = cv::Vec3b(q(image.at(y, x, 2)), q(image.at(y, x, 1)), q(image.at(y, x, 0)));
    }
  }
  if (!cv::imwrite(file.string(), bgr)) throw DataError("cannot write image " + file.string());
}

}  // namespace camstyle::data
