#include "dynpred/svg.hpp"

#include "dynpred/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace dynpred {

namespace {

const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c", "#8a5a44",
                          "#7768ae", "#e08f2c", "#4f4f4f", "#17a2b8"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Series {
  std::string method;
  std::vector<std::pair<double, double>> points;  // (horizon, value)
};

std::string line_chart(const std::string& title, const std::vector<Series>& series,
                       double x_min, double x_max, double y_min, double y_max) {
  constexpr double w = 640, h = 420;
  constexpr double ml = 62, mr = 170, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return mt + (y_max - y) / (y_max - y_min) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
     << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << fmt(ml) << "\" y=\"24\" font-family=\"sans-serif\" "
        "font-size=\"15\" font-weight=\"bold\">" << title << "</text>\n";

  // axes with 5 ticks each
  os << "<g stroke=\"#333\" stroke-width=\"1\">";
  os << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
     << fmt(ml + pw) << "\" y2=\"" << fmt(mt + ph) << "\"/>";
  os << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
     << "\" y2=\"" << fmt(mt + ph) << "\"/></g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x_min + (x_max - x_min) * k / 4.0;
    const double yv = y_min + (y_max - y_min) * k / 4.0;
    os << "<line x1=\"" << fmt(sx(xv)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
       << fmt(sx(xv)) << "\" y2=\"" << fmt(mt + ph + 5) << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << fmt(sx(xv)) << "\" y=\"" << fmt(mt + ph + 20)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
       << fmt(xv) << "</text>\n";
    os << "<line x1=\"" << fmt(ml - 5) << "\" y1=\"" << fmt(sy(yv)) << "\" x2=\""
       << fmt(ml) << "\" y2=\"" << fmt(sy(yv)) << "\" stroke=\"#333\"/>";
    os << "<text x=\"" << fmt(ml - 9) << "\" y=\"" << fmt(sy(yv) + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
       << fmt(yv) << "</text>\n";
  }
  os << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(h - 12)
     << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
        "horizon (years)</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 8];
    // split into segments at gaps so undefined cells are not interpolated
    std::ostringstream path;
    bool open = false;
    for (const auto& [x, y] : series[s].points) {
      if (std::isnan(y)) {
        open = false;
        continue;
      }
      path << (open ? " L " : " M ") << fmt(sx(x)) << ' ' << fmt(sy(y));
      open = true;
    }
    os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      if (std::isnan(y)) continue;
      os << "<circle cx=\"" << fmt(sx(x)) << "\" cy=\"" << fmt(sy(y))
         << "\" r=\"3\" fill=\"" << color << "\"/>";
    }
    os << '\n';
    const double ly = mt + 16.0 * s;
    os << "<line x1=\"" << fmt(ml + pw + 14) << "\" y1=\"" << fmt(ly) << "\" x2=\""
       << fmt(ml + pw + 38) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>";
    os << "<text x=\"" << fmt(ml + pw + 44) << "\" y=\"" << fmt(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].method
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

}  // namespace

std::vector<std::string> plot_results(const BenchmarkResult& results,
                                      const std::string& out_dir) {
  if (results.rows.empty()) throw DataError("empty results; nothing to plot");

  std::vector<std::string> methods;
  std::vector<double> landmarks;
  for (const auto& row : results.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
    if (std::find(landmarks.begin(), landmarks.end(), row.landmark) ==
        landmarks.end()) {
      landmarks.push_back(row.landmark);
    }
  }
  std::sort(landmarks.begin(), landmarks.end());

  std::vector<std::string> written;
  for (const char* metric : {"tdauc", "brier"}) {
    for (double l : landmarks) {
      std::set<double> horizon_set;
      for (const auto& row : results.rows) {
        if (row.metric == metric && row.landmark == l && !std::isnan(row.horizon)) {
          horizon_set.insert(row.horizon);
        }
      }
      if (horizon_set.empty()) continue;
      std::vector<double> hs(horizon_set.begin(), horizon_set.end());
      std::vector<Series> series;
      double y_min = 1e300, y_max = -1e300;
      bool any_value = false;
      for (const auto& m : methods) {
        Series s;
        s.method = m;
        for (double h : hs) {
          double v = kMissing;
          for (const auto& row : results.rows) {
            if (row.method == m && row.metric == metric && row.landmark == l &&
                row.horizon == h) {
              v = row.mean;
              break;
            }
          }
          if (!std::isnan(v)) {
            y_min = std::min(y_min, v);
            y_max = std::max(y_max, v);
            any_value = true;
          }
          s.points.emplace_back(h, v);
        }
        series.push_back(std::move(s));
      }
      if (!any_value) {
        y_min = 0.0;
        y_max = 1.0;
      }
      const double pad = std::max(0.02, (y_max - y_min) * 0.1);
      y_min = std::max(0.0, y_min - pad);
      y_max = std::min(1.0, y_max + pad);
      if (y_max <= y_min) y_max = y_min + 0.1;
      const std::string title = std::string(metric == std::string("tdauc")
                                                ? "Time-dependent AUC"
                                                : "Brier score") +
                                ", landmark " + format_double(l);
      const std::string fname =
          std::string(metric) + "_landmark_" + format_double(l) + ".svg";
      write_file(out_dir + "/" + fname,
                 line_chart(title, series, hs.front(),
                            hs.size() > 1 ? hs.back() : hs.front() + 1.0, y_min,
                            y_max));
      written.push_back(fname);
    }
  }

  // C index as a table-style SVG: methods x landmarks, mean (sd)
  {
    const double cell_w = 110, cell_h = 26, name_w = 150;
    const double w = name_w + cell_w * landmarks.size() + 20;
    const double h = cell_h * (methods.size() + 1) + 60;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
       << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    os << "<text x=\"10\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
          "font-weight=\"bold\">C index, mean (sd) over repetitions</text>\n";
    const double top = 44;
    os << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t c = 0; c < landmarks.size(); ++c) {
      os << "<text x=\"" << fmt(name_w + cell_w * c + cell_w / 2) << "\" y=\""
         << fmt(top + 17) << "\" text-anchor=\"middle\" font-weight=\"bold\">landmark "
         << format_double(landmarks[c]) << "</text>\n";
    }
    for (std::size_t r = 0; r < methods.size(); ++r) {
      const double y = top + cell_h * (r + 1) + 17;
      os << "<text x=\"10\" y=\"" << fmt(y) << "\">" << methods[r] << "</text>\n";
      for (std::size_t c = 0; c < landmarks.size(); ++c) {
        double mean = kMissing, sd = kMissing;
        for (const auto& row : results.rows) {
          if (row.method == methods[r] && row.metric == "cindex" &&
              row.landmark == landmarks[c]) {
            mean = row.mean;
            sd = row.sd;
            break;
          }
        }
        std::string cell = "-";
        if (!std::isnan(mean)) {
          char buf[64];
          if (std::isnan(sd)) {
            std::snprintf(buf, sizeof(buf), "%.3f", mean);
          } else {
            std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", mean, sd);
          }
          cell = buf;
        }
        os << "<text x=\"" << fmt(name_w + cell_w * c + cell_w / 2) << "\" y=\""
           << fmt(y) << "\" text-anchor=\"middle\">" << cell << "</text>\n";
      }
    }
    os << "</g>\n</svg>\n";
    write_file(out_dir + "/cindex_table.svg", os.str());
    written.push_back("cindex_table.svg");
  }
  return written;
}

}  // namespace dynpred
