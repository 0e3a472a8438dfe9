#pragma once

#include "mfy/io.hpp"

namespace mfy {

struct PlotSeries
{
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line plot. With `log_log` set, non-positive points are dropped.
inline std::string
svg_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& x_label,
         const std::string& y_label, bool log_log)
{
  constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 60;
  auto tx = [&](double v) { return log_log ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_log && (s.x[i] <= 0 || s.y[i] <= 0))
        continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, tx(s.y[i]));
      y1 = std::max(y1, tx(s.y[i]));
    }
  if (!(x0 < x1)) {
    x0 = std::isfinite(x0) ? x0 - 1 : 0;
    x1 = x0 + 2;
  }
  if (!(y0 < y1)) {
    y0 = std::isfinite(y0) ? y0 - 1 : 0;
    y1 = y0 + 2;
  }
  auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * (width - left - right); };
  auto py = [&](double v) { return height - bottom - (tx(v) - y0) / (y1 - y0) * (height - top - bottom); };
  static const char* colours[] = { "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b" };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n"
     << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
     << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << width / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\" font-size=\"13\">"
     << x_label << (log_log ? " (log10)" : "") << "</text>\n"
     << "<text x=\"18\" y=\"" << height / 2 << "\" transform=\"rotate(-90 18 " << height / 2
     << ")\" text-anchor=\"middle\" font-size=\"13\">" << y_label << (log_log ? " (log10)" : "") << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double sx = left + (width - left - right) * i / 4.0;
    const double sy = height - bottom - (height - top - bottom) * i / 4.0;
    os << "<text x=\"" << sx << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << format_double(std::round(fx * 1000) / 1000) << "</text>\n"
       << "<text x=\"" << left - 6 << "\" y=\"" << sy + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
       << format_double(std::round(fy * 1000) / 1000) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* colour = colours[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      const double x = series[s].x[i], y = series[s].y[i];
      if ((log_log && (x <= 0 || y <= 0)) || !std::isfinite(x) || !std::isfinite(y))
        continue;
      os << px(x) << ',' << py(y) << ' ';
    }
    os << "\"/>\n<text x=\"" << width - right - 150 << "\" y=\"" << top + 14 * (s + 1) << "\" font-size=\"11\" fill=\""
       << colour << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void
write_svg(const std::filesystem::path& file, const std::string& svg)
{
  std::ofstream out(file);
  if (!out)
    throw Error("cannot open '" + file.string() + "' for writing");
  out << svg;
}

} // namespace mfy
