#include "interplan/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "interplan/errors.hpp"

namespace interplan {

namespace {

class Canvas {
 public:
  Canvas(double x0, double y0, double x1, double y1, double ppm) : x0_(x0), y1_(y1), ppm_(ppm) {
    width_ = (x1 - x0) * ppm;
    height_ = (y1 - y0) * ppm;
  }

  std::string pt(Vec2 p) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", (p.x - x0_) * ppm_, (y1_ - p.y) * ppm_);
    return buf;
  }
  std::string points(const std::vector<Vec2>& ps) const {
    std::string s;
    for (const auto& p : ps) {
      if (!s.empty()) s += ' ';
      s += pt(p);
    }
    return s;
  }
  double px(double x) const { return (x - x0_) * ppm_; }
  double py(double y) const { return (y1_ - y) * ppm_; }
  double scale(double meters) const { return meters * ppm_; }
  double width() const { return width_; }
  double height() const { return height_; }

 private:
  double x0_, y1_, ppm_;
  double width_ = 0.0, height_ = 0.0;
};

std::vector<Vec2> box_outline(const KinematicState& s, const BoundingBox& b) {
  const auto c = OrientedBox(s.position(), s.heading, b).corners();
  return {c.begin(), c.end()};
}

}  // namespace

std::string render_frame(const EpisodeTrace& trace, std::size_t tick_index, const PlotOptions& opts) {
  if (tick_index >= trace.ticks.size()) throw ShapeError("tick index out of range");
  const TickRecord& r = trace.ticks[tick_index];

  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& l : trace.lanes) {
    for (const auto& v : l.centerline.vertices()) {
      ymin = std::min(ymin, v.y - l.width);
      ymax = std::max(ymax, v.y + l.width);
    }
  }
  if (!std::isfinite(ymin)) {
    ymin = r.ego.y - 10.0;
    ymax = r.ego.y + 10.0;
  }
  const Canvas cv(r.ego.x - opts.view_behind, ymin, r.ego.x + opts.view_ahead, ymax, opts.pixels_per_meter);

  std::ostringstream svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "viewBox=\"0 0 %.2f %.2f\">\n",
                cv.width(), cv.height(), cv.width(), cv.height());
  svg << buf;
  svg << "<!-- schema interplan.frame/1 scenario " << trace.scenario << " seed " << trace.seed << " mode "
      << to_string(trace.mode) << " tick " << r.tick << " -->\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f0\"/>\n";

  for (const auto& l : trace.lanes) {
    std::snprintf(buf, sizeof buf, "%.2f", cv.scale(l.width));
    svg << "<polyline class=\"lane\" points=\"" << cv.points(l.centerline.vertices())
        << "\" fill=\"none\" stroke=\"#d0d0cc\" stroke-width=\"" << buf << "\"/>\n";
    svg << "<polyline class=\"lane-center\" points=\"" << cv.points(l.centerline.vertices())
        << "\" fill=\"none\" stroke=\"#ffffff\" stroke-dasharray=\"8 8\"/>\n";
  }
  svg << "<polyline class=\"route\" points=\"" << cv.points(trace.route.vertices())
      << "\" fill=\"none\" stroke=\"#8fb98f\" stroke-width=\"2\"/>\n";
  std::snprintf(buf, sizeof buf, "<circle class=\"goal\" cx=\"%.2f\" cy=\"%.2f\" r=\"%.2f\" ",
                cv.px(trace.goal.center.x), cv.py(trace.goal.center.y), cv.scale(trace.goal.radius));
  svg << buf << "fill=\"none\" stroke=\"#3a8a3a\"/>\n";

  for (const auto& a : r.agents) {
    const AgentSpec& spec = trace.agents.at(a.id);
    svg << "<polygon class=\"agent\" data-id=\"" << a.id << "\" points=\"" << cv.points(box_outline(a.state, spec.box))
        << "\" fill=\"" << (spec.parked ? "#777777" : "#4a78c2") << "\"/>\n";
  }
  svg << "<polygon class=\"ego\" points=\"" << cv.points(box_outline(r.ego, trace.ego_box))
      << "\" fill=\"#d2542f\"/>\n";

  for (const auto& p : r.predictions) {
    for (std::size_t n = 0; n < p.paths.size() && n < p.top.size(); ++n) {
      if (!(p.top[n].second > opts.min_probability)) continue;
      std::snprintf(buf, sizeof buf, "%.3f", std::clamp(p.top[n].second, 0.15, 1.0));
      svg << "<polyline class=\"prediction\" data-agent=\"" << p.agent_id << "\" data-p=\"" << p.top[n].second
          << "\" points=\"" << cv.points(p.paths[n]) << "\" fill=\"none\" stroke=\"#4a78c2\" stroke-opacity=\""
          << buf << "\"/>\n";
    }
  }
  if (!r.plan.empty()) {
    svg << "<polyline class=\"plan\" points=\"" << cv.points(r.plan)
        << "\" fill=\"none\" stroke=\"#d2542f\" stroke-width=\"2\"/>\n";
  }
  std::snprintf(buf, sizeof buf, "t=%.1fs %s", r.time, std::string(to_string(r.event)).c_str());
  svg << "<text x=\"6\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" << buf << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::size_t write_frames(const EpisodeTrace& trace, const std::filesystem::path& dir, const std::string& prefix,
                         const PlotOptions& opts) {
  std::filesystem::create_directories(dir);
  char name[64];
  for (std::size_t i = 0; i < trace.ticks.size(); ++i) {
    std::snprintf(name, sizeof name, "_%04zu.svg", trace.ticks[i].tick);
    const auto path = dir / (prefix + name);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << render_frame(trace, i, opts);
  }
  return trace.ticks.size();
}

}  // namespace interplan
