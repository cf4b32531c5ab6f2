#include "jepa/util/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace jepa::util {

namespace {

constexpr double kW = 640, kH = 400;
constexpr double kLeft = 64, kRight = 24, kTop = 36, kBottom = 48;

struct Axis {
  double lo = 0, hi = 1;
  double place(double v, double a, double b) const {
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

Axis fit_axis(double lo, double hi) {
  if (hi <= lo) hi = lo + 1.0;
  double pad = (hi - lo) * 0.05;
  return {lo == 0.0 ? 0.0 : lo - pad, hi + pad};
}

void draw_frame(Svg& svg, const Axis& x, const Axis& y, const std::string& x_label) {
  svg.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, "#888888");
  svg.line(kLeft, kTop, kLeft, kH - kBottom, "#888888");
  for (int i = 0; i <= 4; ++i) {
    double fx = x.lo + (x.hi - x.lo) * i / 4.0;
    double px = x.place(fx, kLeft, kW - kRight);
    svg.line(px, kH - kBottom, px, kH - kBottom + 4, "#888888");
    svg.text(px, kH - kBottom + 18, fmt6(fx), 11, "middle", "#555555");
    double fy = y.lo + (y.hi - y.lo) * i / 4.0;
    double py = y.place(fy, kH - kBottom, kTop);
    svg.line(kLeft - 4, py, kLeft, py, "#888888");
    svg.text(kLeft - 8, py + 4, fmt6(fy), 11, "end", "#555555");
  }
  svg.text((kLeft + kW - kRight) / 2, kH - 10, x_label, 12, "middle", "#555555");
}

}  // namespace

MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("plot: cannot read '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("plot: '" + path + "' is empty");
  if (line.rfind("step,", 0) != 0)
    throw std::runtime_error("plot: '" + path + "' is not a metrics CSV");
  MetricsTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 6> row{};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &row[0], &row[1], &row[2], &row[3],
                    &row[4], &row[5]) != 6)
      throw std::runtime_error("plot: malformed metrics row '" + line + "'");
    t.rows.push_back(row);
  }
  if (t.rows.empty()) throw std::runtime_error("plot: '" + path + "' has no data rows");
  return t;
}

void plot_loss_curves(const MetricsTable& t, const std::string& out_svg) {
  double x_hi = 0, y_hi = 0;
  for (const auto& r : t.rows) {
    x_hi = std::max(x_hi, r[0]);
    y_hi = std::max({y_hi, r[1], r[2], r[3]});
  }
  Axis x{0, std::max(x_hi, 1.0)}, y = fit_axis(0, y_hi);

  Svg svg(kW, kH);
  svg.text(kLeft, 22, "training losses", 14, "start", "#222222");
  draw_frame(svg, x, y, "step");

  const char* colors[3] = {"#d62728", "#1f77b4", "#2ca02c"};
  const char* names[3] = {"loss_total", "loss_wm", "loss_fm"};
  for (int c = 0; c < 3; ++c) {
    std::vector<std::array<double, 2>> pts;
    pts.reserve(t.rows.size());
    for (const auto& r : t.rows)
      pts.push_back({x.place(r[0], kLeft, kW - kRight),
                     y.place(r[size_t(c) + 1], kH - kBottom, kTop)});
    svg.polyline(pts, colors[c]);
    double lx = kW - kRight - 110, ly = kTop + 16 + 18 * c;
    svg.line(lx, ly - 4, lx + 22, ly - 4, colors[c], 2.5);
    svg.text(lx + 28, ly, names[c], 11, "start", "#444444");
  }
  svg.save(out_svg);
}

void plot_bars(const std::string& title, const std::vector<Bar>& bars, double y_max,
               const std::string& out_svg) {
  if (bars.empty()) throw std::invalid_argument("plot: no bars to draw");
  double hi = y_max;
  if (hi <= 0)
    for (const auto& b : bars) hi = std::max(hi, b.value);
  Axis y = fit_axis(0, std::max(hi, 1e-9));

  Svg svg(kW, kH);
  svg.text(kLeft, 22, title, 14, "start", "#222222");
  svg.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, "#888888");
  svg.line(kLeft, kTop, kLeft, kH - kBottom, "#888888");
  for (int i = 0; i <= 4; ++i) {
    double fy = y.lo + (y.hi - y.lo) * i / 4.0;
    double py = y.place(fy, kH - kBottom, kTop);
    svg.line(kLeft - 4, py, kLeft, py, "#888888");
    svg.text(kLeft - 8, py + 4, fmt6(fy), 11, "end", "#555555");
  }

  double span = kW - kLeft - kRight;
  double slot = span / double(bars.size());
  double width = slot * 0.6;
  for (size_t i = 0; i < bars.size(); ++i) {
    double cx = kLeft + slot * (double(i) + 0.5);
    double top = y.place(bars[i].value, kH - kBottom, kTop);
    svg.rect(cx - width / 2, top, width, (kH - kBottom) - top, "#1f77b4", 0.85);
    svg.text(cx, top - 6, fmt6(bars[i].value), 11, "middle", "#333333");
    svg.text(cx, kH - kBottom + 18, bars[i].label, 11, "middle", "#555555");
  }
  svg.save(out_svg);
}

void plot_heat_grids(const std::string& title, const std::vector<std::vector<float>>& grids,
                     const std::vector<std::string>& labels, int side, int per_row,
                     const std::string& out_svg) {
  if (grids.empty()) throw std::invalid_argument("plot: no grids to draw");
  if (labels.size() != grids.size())
    throw std::invalid_argument("plot: grids and labels must pair up");
  if (per_row < 1) throw std::invalid_argument("plot: per_row must be >= 1");
  const size_t cells = size_t(side) * size_t(side);
  float hi = 0.0f;
  for (const auto& g : grids) {
    if (g.size() != cells) throw std::invalid_argument("plot: grid size does not match side");
    for (float v : g) hi = std::max(hi, v);
  }
  if (hi <= 0.0f) hi = 1.0f;

  const double cell = 14, pad = 18, label_h = 16;
  int n_rows = (int(grids.size()) + per_row - 1) / per_row;
  double gw = side * cell;
  double w = pad + per_row * (gw + pad);
  double h = kTop + n_rows * (gw + label_h + pad) + pad;

  Svg svg(w, h);
  svg.text(pad, 22, title, 14, "start", "#222222");
  for (size_t g = 0; g < grids.size(); ++g) {
    double ox = pad + double(g % size_t(per_row)) * (gw + pad);
    double oy = kTop + double(g / size_t(per_row)) * (gw + label_h + pad);
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        double v = double(grids[g][size_t(r) * size_t(side) + size_t(c)]) / double(hi);
        v = std::clamp(v, 0.0, 1.0);
        int red = int(std::lround(255.0 + (8.0 - 255.0) * v));
        int green = int(std::lround(255.0 + (81.0 - 255.0) * v));
        int blue = int(std::lround(255.0 + (156.0 - 255.0) * v));
        char color[10];
        std::snprintf(color, sizeof color, "#%02x%02x%02x", red, green, blue);
        svg.rect(ox + c * cell, oy + r * cell, cell, cell, color);
      }
    }
    svg.text(ox + gw / 2, oy + gw + 13, labels[g], 11, "middle", "#555555");
  }
  svg.save(out_svg);
}

}  // namespace jepa::util
