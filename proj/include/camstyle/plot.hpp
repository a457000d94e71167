#ifndef CAMSTYLE_PLOT_HPP_
#define CAMSTYLE_PLOT_HPP_

#include <filesystem>
#include <string>
#include <vector>

namespace camstyle::plot {

struct Series {
  std::string name;
  std::vector<double> values;  // one per x label; NaN leaves a gap
};

/// Static PNG line chart with a categorical x axis.
void line_chart(const std::filesystem::path& file, const std::string& title, const std::vector<std::string>& x_labels,
                const std::vector<Series>& series, const std::string& y_label);

/// Static PNG grouped bar chart: one group per label, one bar per series.
void bar_chart(const std::filesystem::path& file, const std::string& title, const std::vector<std::string>& labels,
               const std::vector<Series>& series, const std::string& y_label);

}  // namespace camstyle::plot

#endif  // CAMSTYLE_PLOT_HPP_
