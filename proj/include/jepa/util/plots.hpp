#pragma once

#include "jepa/util/svg.hpp"

#include <array>
#include <string>
#include <vector>

namespace jepa::util {

// Rows of the trainer's metrics CSV:
// step, loss_total, loss_wm, loss_fm, lr_group0, lr_group1.
struct MetricsTable {
  std::vector<std::array<double, 6>> rows;
};
MetricsTable read_metrics_csv(const std::string& path);

void plot_loss_curves(const MetricsTable& t, const std::string& out_svg);

struct Bar {
  std::string label;
  double value = 0.0;
};
// y_max <= 0 autoscales to the data.
void plot_bars(const std::string& title, const std::vector<Bar>& bars, double y_max,
               const std::string& out_svg);

// Square heat grids laid out left to right, wrapping after per_row; one
// shared color scale spans all grids.
void plot_heat_grids(const std::string& title, const std::vector<std::vector<float>>& grids,
                     const std::vector<std::string>& labels, int side, int per_row,
                     const std::string& out_svg);

}  // namespace jepa::util
