#include "exolam/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include "exolam/config.hpp"
#include "exolam/sweep.hpp"

namespace exolam {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::size_t StoreTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw std::runtime_error("report: store has no column '" + name + "'");
}

bool StoreTable::has_col(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

StoreTable load_store_runs(const std::string& store_dir) {
  namespace fs = std::filesystem;
  const fs::path path = fs::path(store_dir) / "runs.csv";
  if (!fs::exists(path))
    throw std::runtime_error("report: no runs.csv in store '" + store_dir +
                             "' (run `exolam sweep` first)");
  std::istringstream is(read_text_file(path.string()));
  StoreTable t;
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("report: empty runs.csv in " + store_dir);
  t.columns = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  if (t.rows.empty())
    throw std::runtime_error("report: runs.csv in '" + store_dir +
                             "' contains no result rows");
  return t;
}

namespace {

struct GroupStat {
  double mean = 0.0, se = 0.0;
  std::size_t n = 0;
};

GroupStat aggregate(const std::vector<double>& vals) {
  GroupStat g;
  g.n = vals.size();
  if (g.n == 0) return g;
  for (double v : vals) g.mean += v;
  g.mean /= static_cast<double>(g.n);
  if (g.n > 1) {
    double var = 0.0;
    for (double v : vals) var += (v - g.mean) * (v - g.mean);
    var /= static_cast<double>(g.n - 1);
    g.se = std::sqrt(var / static_cast<double>(g.n));
  }
  return g;
}

// Rows grouped by (key columns), collecting one metric.
std::map<std::vector<std::string>, std::vector<double>> group_metric(
    const StoreTable& runs, const std::vector<std::string>& key_cols,
    const std::string& metric) {
  std::map<std::vector<std::string>, std::vector<double>> groups;
  const std::size_t mc = runs.col(metric);
  const std::size_t sc = runs.col("status");
  std::vector<std::size_t> kc;
  for (const auto& k : key_cols) kc.push_back(runs.col(k));
  for (const auto& row : runs.rows) {
    if (row[sc] != "ok" || row[mc].empty()) continue;
    std::vector<std::string> key;
    for (auto c : kc) key.push_back(row[c]);
    groups[key].push_back(std::stod(row[mc]));
  }
  return groups;
}

std::vector<std::string> distinct_values(const StoreTable& runs,
                                         const std::string& column) {
  std::set<std::string> vals;
  const std::size_t c = runs.col(column);
  const std::size_t sc = runs.col("status");
  for (const auto& row : runs.rows)
    if (row[sc] == "ok") vals.insert(row[c]);
  std::vector<std::string> out(vals.begin(), vals.end());
  std::sort(out.begin(), out.end(), [](const std::string& a,
                                       const std::string& b) {
    try {
      return std::stod(a) < std::stod(b);
    } catch (...) {
      return a < b;
    }
  });
  return out;
}

void require_coverage(const FigureData& fig, const std::string& axis) {
  std::vector<std::string> missing;
  for (const auto& s : fig.series)
    for (const auto& p : s.points)
      if (p.n == 0) missing.push_back("(" + axis + ", " + p.x_label + ")");
  if (!missing.empty()) {
    std::string msg = "report: missing sweep coverage for " + fig.figure_id + ":";
    for (const auto& m : missing) msg += " " + m;
    throw std::runtime_error(msg);
  }
}

FigureData fig_simple_metrics(const std::string& id, const StoreTable& runs,
                              const std::string& x_col,
                              const std::vector<std::string>& metrics) {
  FigureData fig;
  fig.figure_id = id;
  fig.x_label = x_col;
  const auto xs = distinct_values(runs, x_col);
  for (const auto& metric : metrics) {
    Series s;
    s.name = metric;
    s.metric = metric;
    auto groups = group_metric(runs, {x_col}, metric);
    for (const auto& x : xs) {
      SeriesPoint p;
      p.x = std::stod(x);
      p.x_label = x;
      auto it = groups.find({x});
      if (it != groups.end()) {
        GroupStat g = aggregate(it->second);
        p.mean = g.mean;
        p.stderr_ = g.se;
        p.n = g.n;
      }
      s.points.push_back(p);
    }
    fig.series.push_back(std::move(s));
  }
  require_coverage(fig, x_col);
  return fig;
}

FigureData fig_series_by(const std::string& id, const StoreTable& runs,
                         const std::string& x_col,
                         const std::string& series_col,
                         const std::string& metric) {
  FigureData fig;
  fig.figure_id = id;
  fig.x_label = x_col;
  const auto xs = distinct_values(runs, x_col);
  const auto series_vals = distinct_values(runs, series_col);
  auto groups = group_metric(runs, {series_col, x_col}, metric);
  for (const auto& sv : series_vals) {
    Series s;
    s.name = series_col + "=" + sv;
    s.metric = metric;
    for (const auto& x : xs) {
      SeriesPoint p;
      p.x = std::stod(x);
      p.x_label = x;
      auto it = groups.find({sv, x});
      if (it != groups.end()) {
        GroupStat g = aggregate(it->second);
        p.mean = g.mean;
        p.stderr_ = g.se;
        p.n = g.n;
      }
      s.points.push_back(p);
    }
    fig.series.push_back(std::move(s));
  }
  require_coverage(fig, x_col);
  return fig;
}

// Objective-vs-baseline differences on a (p_switch, alpha) grid.
FigureData fig_delta_vs_baseline(const std::string& id, const StoreTable& runs,
                                 const std::string& metric,
                                 const std::vector<std::string>& objectives) {
  FigureData fig;
  fig.figure_id = id;
  fig.x_label = "p_switch|alpha";
  fig.categorical_x = true;
  const std::string pcol = "env.p_switch", acol = "env.alpha",
                    ocol = "model.objective";
  const auto ps = distinct_values(runs, pcol);
  const auto as = distinct_values(runs, acol);
  auto groups = group_metric(runs, {ocol, pcol, acol}, metric);

  std::vector<std::pair<std::string, std::string>> points;
  for (const auto& p : ps)
    for (const auto& a : as) points.emplace_back(p, a);

  for (const auto& obj : objectives) {
    Series s;
    s.name = obj;
    s.metric = "delta_" + metric;
    double x = 0.0;
    for (const auto& [p, a] : points) {
      SeriesPoint pt;
      pt.x = x++;
      pt.x_label = "p=" + p + ",a=" + a;
      auto base_it = groups.find({"baseline", p, a});
      auto obj_it = groups.find({obj, p, a});
      if (base_it != groups.end() && obj_it != groups.end()) {
        GroupStat gb = aggregate(base_it->second);
        GroupStat go = aggregate(obj_it->second);
        pt.mean = go.mean - gb.mean;
        pt.stderr_ = std::sqrt(gb.se * gb.se + go.se * go.se);
        pt.n = std::min(gb.n, go.n);
      }
      s.points.push_back(pt);
    }
    fig.series.push_back(std::move(s));
  }
  require_coverage(fig, fig.x_label);
  return fig;
}

}  // namespace

FigureData build_figure(const std::string& figure_id, const StoreTable& runs) {
  if (figure_id == "fig2c")
    return fig_simple_metrics("fig2c", runs, "env.p_switch",
                              {"nmse", "var_xi_prime"});
  if (figure_id == "fig3r")
    return fig_series_by("fig3r", runs, "env.alpha", "env.p_switch", "nmse");
  if (figure_id == "fig4a")
    return fig_delta_vs_baseline("fig4a", runs, "nmse",
                                 {"xexo", "action_pred", "q_pred"});
  if (figure_id == "fig4b") {
    FigureData fig = fig_delta_vs_baseline("fig4b_delta", runs, "var_xi_pair",
                                           {"action_pred"});
    // For 4b the absolute values matter, so report both levels instead.
    FigureData abs_fig;
    abs_fig.figure_id = "fig4b";
    abs_fig.x_label = "p_switch|alpha";
    abs_fig.categorical_x = true;
    const auto ps = distinct_values(runs, "env.p_switch");
    const auto as = distinct_values(runs, "env.alpha");
    auto groups = group_metric(
        runs, {"model.objective", "env.p_switch", "env.alpha"}, "var_xi_pair");
    for (const std::string obj : {"baseline", "action_pred"}) {
      Series s;
      s.name = obj;
      s.metric = "var_xi_pair";
      double x = 0.0;
      for (const auto& p : ps)
        for (const auto& a : as) {
          SeriesPoint pt;
          pt.x = x++;
          pt.x_label = "p=" + p + ",a=" + a;
          auto it = groups.find({obj, p, a});
          if (it != groups.end()) {
            GroupStat g = aggregate(it->second);
            pt.mean = g.mean;
            pt.stderr_ = g.se;
            pt.n = g.n;
          }
          s.points.push_back(pt);
        }
      abs_fig.series.push_back(std::move(s));
    }
    require_coverage(abs_fig, abs_fig.x_label);
    return abs_fig;
  }
  if (figure_id == "fig5b") {
    FigureData fig;
    fig.figure_id = "fig5b";
    fig.x_label = "env.sigma";
    const auto xs = distinct_values(runs, "env.sigma");
    const auto objs = distinct_values(runs, "model.objective");
    for (const std::string metric :
         {"grid_consistency_z", "grid_exo_region_mse"}) {
      auto groups =
          group_metric(runs, {"model.objective", "env.sigma"}, metric);
      for (const auto& obj : objs) {
        Series s;
        s.name = obj + ":" + metric;
        s.metric = metric;
        for (const auto& x : xs) {
          SeriesPoint p;
          p.x = std::stod(x);
          p.x_label = x;
          auto it = groups.find({obj, x});
          if (it != groups.end()) {
            GroupStat g = aggregate(it->second);
            p.mean = g.mean;
            p.stderr_ = g.se;
            p.n = g.n;
          }
          s.points.push_back(p);
        }
        fig.series.push_back(std::move(s));
      }
    }
    require_coverage(fig, fig.x_label);
    return fig;
  }
  throw std::invalid_argument(
      "report: unknown figure id '" + figure_id +
      "' (expected fig2c|fig3r|fig4a|fig4b|fig5b)");
}

std::string figure_csv(const FigureData& fig) {
  std::string out = "figure,x,series,metric,mean,stderr,n_seeds\n";
  for (const auto& s : fig.series)
    for (const auto& p : s.points) {
      out += fig.figure_id + "," + p.x_label + "," + s.name + "," + s.metric +
             "," + format_float(p.mean) + "," + format_float(p.stderr_) + "," +
             std::to_string(p.n) + "\n";
    }
  return out;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string figure_svg(const FigureData& fig) {
  const double W = 720, H = 440;
  const double ml = 70, mr = 180, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& s : fig.series)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.mean - p.stderr_);
      ymax = std::max(ymax, p.mean + p.stderr_);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double ypad = 0.08 * (ymax - ymin);
  ymax += ypad;
  if (ymin < 0.0) ymin -= ypad;

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << fig.figure_id
     << "</text>\n";

  // Axes + ticks.
  os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    os << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(fy) << "\" x2=\"" << ml
       << "\" y2=\"" << sy(fy) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(fy) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
          "font-size=\"11\">"
       << svg_num(fy) << "</text>\n";
  }
  if (fig.categorical_x && !fig.series.empty()) {
    for (const auto& p : fig.series.front().points) {
      os << "<text x=\"" << sx(p.x) << "\" y=\"" << mt + ph + 16
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            "font-size=\"10\">"
         << p.x_label << "</text>\n";
    }
  } else {
    for (int t = 0; t <= 4; ++t) {
      const double fx = xmin + (xmax - xmin) * t / 4.0;
      os << "<line x1=\"" << sx(fx) << "\" y1=\"" << mt + ph << "\" x2=\""
         << sx(fx) << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << sx(fx) << "\" y=\"" << mt + ph + 18
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            "font-size=\"11\">"
         << svg_num(fx) << "</text>\n";
    }
  }
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\">"
     << fig.x_label << "</text>\n";
  if (ymin < 0.0 && ymax > 0.0)
    os << "<line x1=\"" << ml << "\" y1=\"" << sy(0.0) << "\" x2=\"" << ml + pw
       << "\" y2=\"" << sy(0.0)
       << "\" stroke=\"#999999\" stroke-dasharray=\"4,3\"/>\n";

  for (std::size_t si = 0; si < fig.series.size(); ++si) {
    const auto& s = fig.series[si];
    const char* color = kPalette[si % 8];
    std::string pts;
    for (const auto& p : s.points) {
      pts += svg_num(sx(p.x)) + "," + svg_num(sy(p.mean)) + " ";
      os << "<line x1=\"" << sx(p.x) << "\" y1=\"" << sy(p.mean - p.stderr_)
         << "\" x2=\"" << sx(p.x) << "\" y2=\"" << sy(p.mean + p.stderr_)
         << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.mean)
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    os << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    const double ly = mt + 16 + 16 * static_cast<double>(si);
    os << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\""
       << ml + pw + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw + 35 << "\" y=\"" << ly + 4
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_figure(const std::string& out_dir, const FigureData& fig) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / (fig.figure_id + ".csv")).string(),
                  figure_csv(fig));
  write_text_file((fs::path(out_dir) / (fig.figure_id + ".svg")).string(),
                  figure_svg(fig));
}

}  // namespace exolam
