#include "ovf/svg.hpp"

#include "ovf/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ovf::bench {

void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<Series>& series) {
  const int W = 720, H = 420, L = 60, R = 20, Tm = 40, B = 40;
  double lo = 1e300, hi = -1e300;
  size_t n = 0;
  for (const Series& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!(lo < hi)) {
    lo = lo > hi ? 0.0 : lo - 1.0;
    hi = lo + 2.0;
  }
  double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::ofstream out(path);
  require(out.good(), "write_line_chart: cannot open " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
      << "</text>\n";
  out << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
      << "' stroke='black'/>\n";
  out << "<line x1='" << L << "' y1='" << Tm << "' x2='" << L << "' y2='" << H - B
      << "' stroke='black'/>\n";
  out << "<text x='10' y='" << Tm + 5 << "' font-size='10'>" << hi << "</text>\n";
  out << "<text x='10' y='" << H - B << "' font-size='10'>" << lo << "</text>\n";
  out << "<text x='" << W - R - 10 << "' y='" << H - 18 << "' font-size='10'>t=" << n
      << "</text>\n";

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = colors[si % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    bool open = false;
    for (size_t i = 0; i < s.values.size(); ++i) {
      double v = s.values[i];
      if (!std::isfinite(v)) {
        if (open) out << "' /><polyline fill='none' stroke='" << color
                      << "' stroke-width='1.5' points='";
        open = false;
        continue;
      }
      double x = L + (W - L - R) * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
      double y = H - B - (H - Tm - B) * (v - lo) / (hi - lo);
      out << x << "," << y << " ";
      open = true;
    }
    out << "'/>\n";
    out << "<text x='" << L + 8 << "' y='" << Tm + 14 + 14 * si << "' font-size='11' fill='"
        << color << "'>" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ovf::bench
