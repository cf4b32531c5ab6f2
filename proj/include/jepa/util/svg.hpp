#pragma once

#include <array>
#include <string>
#include <vector>

namespace jepa::util {

// Minimal deterministic SVG assembly; every coordinate is formatted with
// %.6g so repeated runs emit identical bytes.
class Svg {
 public:
  Svg(double width, double height);

  void rect(double x, double y, double w, double h, const std::string& fill,
            double opacity = 1.0);
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0);
  void polyline(const std::vector<std::array<double, 2>>& pts, const std::string& stroke,
                double width = 1.5);
  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& anchor = "start", const std::string& fill = "#333333");

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double width_, height_;
  std::string body_;
};

std::string xml_escape(const std::string& s);
std::string fmt6(double v);

}  // namespace jepa::util
