#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "interplan/simworld.hpp"

namespace interplan {

struct PlotOptions {
  double pixels_per_meter = 8.0;
  double view_behind = 30.0;  // meters shown behind the ego
  double view_ahead = 60.0;
  double min_probability = 0.1;
};

// One SVG frame of a tick: lanes, goal, boxes, the chosen plan and one
// polyline (class "prediction") per logged prediction above min_probability.
std::string render_frame(const EpisodeTrace& trace, std::size_t tick_index, const PlotOptions& opts = {});

// Writes <prefix>_<tick>.svg for every tick; returns the number of files.
std::size_t write_frames(const EpisodeTrace& trace, const std::filesystem::path& dir, const std::string& prefix,
                         const PlotOptions& opts = {});

}  // namespace interplan
