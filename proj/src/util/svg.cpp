#include "jepa/util/svg.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace jepa::util {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

Svg::Svg(double width, double height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("svg: size must be positive");
}

void Svg::rect(double x, double y, double w, double h, const std::string& fill,
               double opacity) {
  body_ += "<rect x=\"" + fmt6(x) + "\" y=\"" + fmt6(y) + "\" width=\"" + fmt6(w) +
           "\" height=\"" + fmt6(h) + "\" fill=\"" + fill + "\"";
  if (opacity != 1.0) body_ += " fill-opacity=\"" + fmt6(opacity) + "\"";
  body_ += "/>\n";
}

void Svg::line(double x1, double y1, double x2, double y2, const std::string& stroke,
               double width) {
  body_ += "<line x1=\"" + fmt6(x1) + "\" y1=\"" + fmt6(y1) + "\" x2=\"" + fmt6(x2) +
           "\" y2=\"" + fmt6(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
           fmt6(width) + "\"/>\n";
}

void Svg::polyline(const std::vector<std::array<double, 2>>& pts, const std::string& stroke,
                   double width) {
  if (pts.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + fmt6(width) +
           "\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) body_ += " ";
    body_ += fmt6(pts[i][0]) + "," + fmt6(pts[i][1]);
  }
  body_ += "\"/>\n";
}

void Svg::text(double x, double y, const std::string& s, double size,
               const std::string& anchor, const std::string& fill) {
  body_ += "<text x=\"" + fmt6(x) + "\" y=\"" + fmt6(y) + "\" font-size=\"" + fmt6(size) +
           "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
           "\">" + xml_escape(s) + "</text>\n";
}

std::string Svg::str() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt6(width_) + "\" height=\"" +
         fmt6(height_) + "\" viewBox=\"0 0 " + fmt6(width_) + " " + fmt6(height_) + "\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n" + body_ + "</svg>\n";
}

void Svg::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("svg: cannot write '" + path + "'");
  os << str();
}

}  // namespace jepa::util
