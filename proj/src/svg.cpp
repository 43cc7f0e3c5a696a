#include "panelvar/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "panelvar/common.hpp"

namespace panelvar {

namespace {

const char* kBlue = "#2166ac";
const char* kRed = "#b2182b";
const char* kGrey = "#777777";

struct Svg {
  std::ostringstream body;
  int width, height;

  Svg(int w, int h) : width(w), height(h) {}

  void line(double x1, double y1, double x2, double y2, const char* stroke,
            double w = 1.0, const char* dash = nullptr) {
    body << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='"
         << y2 << "' stroke='" << stroke << "' stroke-width='" << w << "'";
    if (dash) body << " stroke-dasharray='" << dash << "'";
    body << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts,
                const char* stroke, double w = 1.2, const char* dash = nullptr) {
    body << "<polyline fill='none' stroke='" << stroke << "' stroke-width='" << w
         << "'";
    if (dash) body << " stroke-dasharray='" << dash << "'";
    body << " points='";
    for (const auto& [x, y] : pts) body << x << "," << y << " ";
    body << "'/>\n";
  }
  void circle(double x, double y, double r, const char* fill,
              double opacity = 1.0) {
    body << "<circle cx='" << x << "' cy='" << y << "' r='" << r << "' fill='"
         << fill << "' fill-opacity='" << opacity << "'/>\n";
  }
  void rect(double x, double y, double w, double h, const char* stroke) {
    body << "<rect x='" << x << "' y='" << y << "' width='" << w << "' height='"
         << h << "' fill='none' stroke='" << stroke << "' stroke-width='0.7'/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 10,
            const char* anchor = "middle") {
    body << "<text x='" << x << "' y='" << y << "' font-size='" << size
         << "' font-family='sans-serif' text-anchor='" << anchor << "'>" << s
         << "</text>\n";
  }
  void save(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
        << "' height='" << height << "' viewBox='0 0 " << width << " " << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << body.str() << "</svg>\n";
  }
};

struct Frame {
  double px, py, pw, ph;      // pixel rect
  double x0, x1, y0, y1;      // data range
  double x(double v) const { return px + (v - x0) / (x1 - x0) * pw; }
  double y(double v) const { return py + ph - (v - y0) / (y1 - y0) * ph; }
};

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const std::vector<std::string>& pretty_names() {
  static const std::vector<std::string> n = {"log R", "log ED", "dGDP",
                                             "dTransit"};
  return n;
}

}  // namespace

void save_irf_grid_svg(const IrfResult& irf, const std::string& path) {
  const int cell_w = 190, cell_h = 130, margin = 60, gap = 14;
  Svg svg(margin + 4 * (cell_w + gap) + 20, margin + 4 * (cell_h + gap) + 30);
  svg.text(svg.width / 2.0, 18,
           std::string("Impulse responses (") + irf_kind_name(irf.kind) +
               "), mean and 95% interval");

  for (int i = 0; i < 4; ++i) {    // response (row)
    for (int j = 0; j < 4; ++j) {  // shock (column)
      Frame f;
      f.px = margin + j * (cell_w + gap);
      f.py = 40.0 + i * (cell_h + gap);
      f.pw = cell_w;
      f.ph = cell_h;
      f.x0 = 0;
      f.x1 = irf.horizon;
      double lo = 0, hi = 0;
      for (int h = 0; h <= irf.horizon; ++h) {
        lo = std::min(lo, irf.cri_low[static_cast<std::size_t>(h)](i, j));
        hi = std::max(hi, irf.cri_high[static_cast<std::size_t>(h)](i, j));
      }
      double pad = 0.1 * std::max(hi - lo, 1e-12);
      f.y0 = lo - pad;
      f.y1 = hi + pad;

      svg.rect(f.px, f.py, f.pw, f.ph, kGrey);
      if (f.y0 < 0 && f.y1 > 0)
        svg.line(f.x(0), f.y(0.0), f.x(f.x1), f.y(0.0), kGrey, 0.6, "2 3");
      std::vector<std::pair<double, double>> mean_pts, lo_pts, hi_pts;
      for (int h = 0; h <= irf.horizon; ++h) {
        mean_pts.push_back({f.x(h), f.y(irf.mean[static_cast<std::size_t>(h)](i, j))});
        lo_pts.push_back({f.x(h), f.y(irf.cri_low[static_cast<std::size_t>(h)](i, j))});
        hi_pts.push_back({f.x(h), f.y(irf.cri_high[static_cast<std::size_t>(h)](i, j))});
      }
      svg.polyline(lo_pts, kRed, 0.9, "3 3");
      svg.polyline(hi_pts, kRed, 0.9, "3 3");
      svg.polyline(mean_pts, "black", 1.4);
      if (i == 0)
        svg.text(f.px + cell_w / 2.0, f.py - 5,
                 "shock: " + pretty_names()[static_cast<std::size_t>(j)]);
      if (j == 0)
        svg.text(f.px - 8, f.py + cell_h / 2.0,
                 pretty_names()[static_cast<std::size_t>(i)], 10, "end");
      svg.text(f.px + 2, f.py + cell_h + 11, "0", 8, "start");
      svg.text(f.px + cell_w - 2, f.py + cell_h + 11,
               std::to_string(irf.horizon), 8, "end");
      svg.text(f.px - 2, f.py + 8, short_num(f.y1), 7, "end");
      svg.text(f.px - 2, f.py + cell_h, short_num(f.y0), 7, "end");
    }
  }
  svg.save(path);
}

void save_npi_forest_svg(const std::vector<ParamSummary>& summaries,
                         const std::vector<std::string>& npi_ids,
                         const std::string& path) {
  const int n = static_cast<int>(npi_ids.size());
  const int panel_w = 230, row_h = 16, label_w = 150, gap = 14;
  const int panel_h = (n + 1) * row_h;
  Svg svg(label_w + 2 * (panel_w + gap) + 30, 60 + 4 * (panel_h + gap));
  svg.text(svg.width / 2.0, 18, "NPI coefficients, mean and 95% interval");
  const char* col_names[2] = {"changes", "level"};
  const char* prefixes[2] = {"chg.", "lvl."};

  for (int resp = 0; resp < 4; ++resp) {
    for (int col = 0; col < 2; ++col) {
      Frame f;
      f.px = label_w + col * (panel_w + gap);
      f.py = 40.0 + resp * (panel_h + gap);
      f.pw = panel_w;
      f.ph = panel_h;
      double lim = 1e-6;
      std::vector<const ParamSummary*> rows;
      for (int k = 0; k < n; ++k) {
        std::string name = std::string(prefixes[col]) +
                           response_names()[static_cast<std::size_t>(resp)] +
                           "." + npi_ids[static_cast<std::size_t>(k)];
        const ParamSummary* found = nullptr;
        for (const auto& s : summaries)
          if (s.name == name) found = &s;
        rows.push_back(found);
        if (found) {
          lim = std::max({lim, std::abs(found->cri_low), std::abs(found->cri_high)});
        }
      }
      f.x0 = -1.1 * lim;
      f.x1 = 1.1 * lim;
      f.y0 = 0;
      f.y1 = 1;
      svg.rect(f.px, f.py, f.pw, f.ph, kGrey);
      svg.line(f.x(0), f.py, f.x(0), f.py + f.ph, kGrey, 0.6, "2 3");
      svg.text(f.px + panel_w / 2.0, f.py - 4,
               pretty_names()[static_cast<std::size_t>(resp)] + std::string(" [") +
                   col_names[col] + "]",
               9);
      for (int k = 0; k < n; ++k) {
        double cy = f.py + (k + 1) * row_h;
        const ParamSummary* s = rows[static_cast<std::size_t>(k)];
        if (!s) continue;
        bool sig = s->cri_low > 0 || s->cri_high < 0;
        const char* color = !sig ? kGrey : (s->mean > 0 ? kBlue : kRed);
        svg.line(f.x(s->cri_low), cy, f.x(s->cri_high), cy, color, 1.2);
        svg.circle(f.x(s->mean), cy, 2.4, color);
        if (col == 0)
          svg.text(label_w - 6, cy + 3,
                   npi_info(npi_ids[static_cast<std::size_t>(k)]).name, 8, "end");
      }
      svg.text(f.px + 2, f.py + panel_h + 10, short_num(f.x0), 7, "start");
      svg.text(f.px + panel_w - 2, f.py + panel_h + 10, short_num(f.x1), 7, "end");
    }
  }
  svg.save(path);
}

void save_forecast_scatter_svg(const ForecastResult& forecast,
                               const std::string& path) {
  const int cell = 240, margin = 50, gap = 26;
  Svg svg(margin + 2 * (cell + gap) + 10, 40 + 2 * (cell + gap) + 10);
  svg.text(svg.width / 2.0, 16,
           "One-step forecasts vs actual (black: model, red: naive)");
  for (int v = 0; v < 4; ++v) {
    Frame f;
    f.px = margin + (v % 2) * (cell + gap);
    f.py = 30.0 + (v / 2) * (cell + gap);
    f.pw = cell;
    f.ph = cell;
    double lo = 0, hi = 0;
    for (const auto& r : forecast.rows) {
      lo = std::min({lo, r.actual(v), r.forecast(v), r.naive(v)});
      hi = std::max({hi, r.actual(v), r.forecast(v), r.naive(v)});
    }
    double pad = 0.05 * std::max(hi - lo, 1e-9);
    f.x0 = f.y0 = lo - pad;
    f.x1 = f.y1 = hi + pad;
    svg.rect(f.px, f.py, f.pw, f.ph, kGrey);
    svg.line(f.x(f.x0), f.y(f.x0), f.x(f.x1), f.y(f.x1), kGrey, 0.8, "3 3");
    for (const auto& r : forecast.rows) {
      svg.circle(f.x(r.actual(v)), f.y(r.naive(v)), 1.6, kRed, 0.45);
      svg.circle(f.x(r.actual(v)), f.y(r.forecast(v)), 1.6, "black", 0.55);
    }
    char label[128];
    std::snprintf(label, sizeof(label), "%s (rmse: %.3g vs naive %.3g)",
                  pretty_names()[static_cast<std::size_t>(v)].c_str(),
                  forecast.rmse_model(v), forecast.rmse_naive(v));
    svg.text(f.px + cell / 2.0, f.py - 4, label, 9);
  }
  svg.save(path);
}

void save_cluster_scatter_svg(const std::vector<std::string>& labels,
                              const std::vector<double>& x,
                              const std::vector<double>& y,
                              const std::vector<int>& cluster,
                              const std::string& x_name,
                              const std::string& y_name,
                              const std::string& path) {
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3",
                                  "#e7298a", "#66a61e", "#e6ab02"};
  const int cell = 420, margin = 60;
  Svg svg(cell + margin + 30, cell + 90);
  svg.text((cell + margin) / 2.0, 16, y_name + " vs " + x_name + " intercepts");
  Frame f;
  f.px = margin;
  f.py = 30;
  f.pw = cell;
  f.ph = cell;
  double lo_x = *std::min_element(x.begin(), x.end());
  double hi_x = *std::max_element(x.begin(), x.end());
  double lo_y = *std::min_element(y.begin(), y.end());
  double hi_y = *std::max_element(y.begin(), y.end());
  double pad_x = 0.08 * std::max(hi_x - lo_x, 1e-9);
  double pad_y = 0.08 * std::max(hi_y - lo_y, 1e-9);
  f.x0 = lo_x - pad_x;
  f.x1 = hi_x + pad_x;
  f.y0 = lo_y - pad_y;
  f.y1 = hi_y + pad_y;
  svg.rect(f.px, f.py, f.pw, f.ph, kGrey);
  if (f.x0 < 0 && f.x1 > 0) svg.line(f.x(0), f.py, f.x(0), f.py + f.ph, kGrey, 0.5, "2 3");
  if (f.y0 < 0 && f.y1 > 0) svg.line(f.px, f.y(0), f.px + f.pw, f.y(0), kGrey, 0.5, "2 3");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const char* color = palette[cluster[i] % 6];
    svg.circle(f.x(x[i]), f.y(y[i]), 3.2, color, 0.9);
    svg.text(f.x(x[i]), f.y(y[i]) - 5, labels[i], 8);
  }
  svg.text((f.px + f.pw + f.px) / 2.0, f.py + f.ph + 28, x_name);
  svg.text(14, f.py + f.ph / 2.0, y_name, 10, "middle");
  svg.save(path);
}

}  // namespace panelvar
