#include "camstyle/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace camstyle::plot {

namespace {

constexpr int kWidth = 900, kHeight = 560;
constexpr int kLeft = 80, kRight = 200, kTop = 50, kBottom = 90;

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                               {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

cv::Scalar color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Frame {
  cv::Mat img;
  double lo = 0, hi = 1;

  int y_of(double v) const {
    const double t = (v - lo) / (hi - lo);
    return static_cast<int>(std::lround(kHeight - kBottom - t * (kHeight - kTop - kBottom)));
  }
};

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45, int thickness = 1) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, {30, 30, 30}, thickness, cv::LINE_AA);
}

Frame frame(const std::string& title, const std::vector<Series>& series, const std::string& y_label) {
  Frame f;
  f.img = cv::Mat(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  lo = std::min(lo, 0.0);
  hi = std::max(hi, lo + 1e-6);
  hi += 0.05 * (hi - lo);
  f.lo = lo;
  f.hi = hi;
  text(f.img, title, {kLeft, 30}, 0.6, 2);
  text(f.img, y_label, {10, kTop - 10});
  cv::line(f.img, {kLeft, kTop}, {kLeft, kHeight - kBottom}, {0, 0, 0}, 1);
  cv::line(f.img, {kLeft, kHeight - kBottom}, {kWidth - kRight, kHeight - kBottom}, {0, 0, 0}, 1);
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    const int y = f.y_of(v);
    cv::line(f.img, {kLeft - 4, y}, {kWidth - kRight, y}, {225, 225, 225}, 1);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    text(f.img, buf, {8, y + 4}, 0.4);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const int y = kTop + 20 + static_cast<int>(i) * 22;
    cv::rectangle(f.img, {kWidth - kRight + 15, y - 10}, {kWidth - kRight + 30, y + 2}, color(i), cv::FILLED);
    text(f.img, series[i].name, {kWidth - kRight + 36, y});
  }
  return f;
}

void save(const std::filesystem::path& file, const cv::Mat& img) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  if (!cv::imwrite(file.string(), img)) throw std::runtime_error("cannot write plot " + file.string());
}

}  // namespace

void line_chart(const std::filesystem::path& file, const std::string& title, const std::vector<std::string>& x_labels,
                const std::vector<Series>& series, const std::string& y_label) {
  Frame f = frame(title, series, y_label);
  const int n = static_cast<int>(x_labels.size());
  const int span = kWidth - kLeft - kRight;
  auto x_of = [&](int i) { return kLeft + (n <= 1 ? span / 2 : 20 + i * (span - 40) / (n - 1)); };
  for (int i = 0; i < n; ++i) text(f.img, x_labels[static_cast<std::size_t>(i)], {x_of(i) - 12, kHeight - kBottom + 22});
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::optional<cv::Point> prev;
    for (int i = 0; i < n && i < static_cast<int>(series[s].values.size()); ++i) {
      const double v = series[s].values[static_cast<std::size_t>(i)];
      if (!std::isfinite(v)) {
        prev.reset();
        continue;
      }
      const cv::Point p{x_of(i), f.y_of(v)};
      if (prev) cv::line(f.img, *prev, p, color(s), 2, cv::LINE_AA);
      cv::circle(f.img, p, 4, color(s), cv::FILLED, cv::LINE_AA);
      prev = p;
    }
  }
  save(file, f.img);
}

void bar_chart(const std::filesystem::path& file, const std::string& title, const std::vector<std::string>& labels,
               const std::vector<Series>& series, const std::string& y_label) {
  Frame f = frame(title, series, y_label);
  const int groups = std::max<int>(1, static_cast<int>(labels.size()));
  const int span = kWidth - kLeft - kRight;
  const int group_w = span / groups;
  const int bars = std::max<int>(1, static_cast<int>(series.size()));
  const int bar_w = std::max(2, (group_w - 16) / bars);
  for (int g = 0; g < static_cast<int>(labels.size()); ++g) {
    const int x0 = kLeft + g * group_w + 8;
    for (int s = 0; s < static_cast<int>(series.size()); ++s) {
      if (g >= static_cast<int>(series[s].values.size())) continue;
      const double v = series[s].values[static_cast<std::size_t>(g)];
      if (!std::isfinite(v)) continue;
      cv::rectangle(f.img, {x0 + s * bar_w, f.y_of(v)}, {x0 + (s + 1) * bar_w - 2, f.y_of(f.lo)}, color(s), cv::FILLED);
    }
    // Long labels are staggered onto two lines.
    text(f.img, labels[static_cast<std::size_t>(g)], {x0, kHeight - kBottom + 20 + (g % 2) * 18}, 0.38);
  }
  save(file, f.img);
}

}  // namespace camstyle::plot
