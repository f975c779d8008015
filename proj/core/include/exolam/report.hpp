#pragma once

#include <map>
#include <string>
#include <vector>

namespace exolam {

// Per-run table loaded back from a sweep store.
struct StoreTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const;  // throws if absent
  bool has_col(const std::string& name) const;
};

StoreTable load_store_runs(const std::string& store_dir);

struct SeriesPoint {
  double x = 0.0;
  std::string x_label;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

struct Series {
  std::string name;    // legend entry
  std::string metric;  // registry metric (or delta_<metric>)
  std::vector<SeriesPoint> points;
};

struct FigureData {
  std::string figure_id;
  std::string x_label;
  std::vector<Series> series;
  bool categorical_x = false;
};

// Known figure ids: fig2c, fig3r, fig4a, fig4b, fig5b. Throws with the
// missing (axis, value) pairs when the store lacks coverage.
FigureData build_figure(const std::string& figure_id, const StoreTable& runs);

std::string figure_csv(const FigureData& fig);
std::string figure_svg(const FigureData& fig);

// Writes <out_dir>/<figure_id>.csv and .svg.
void write_figure(const std::string& out_dir, const FigureData& fig);

}  // namespace exolam
