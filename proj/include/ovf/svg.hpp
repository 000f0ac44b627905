#ifndef OVF_SVG_HPP
#define OVF_SVG_HPP

#include <string>
#include <vector>

namespace ovf::bench {

struct Series {
  std::string name;
  std::vector<double> values;  // indexed by time step
};

// Minimal static line chart; non-finite values break the polyline.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<Series>& series);

}  // namespace ovf::bench

#endif  // OVF_SVG_HPP
