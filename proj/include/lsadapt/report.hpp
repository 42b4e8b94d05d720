#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lsadapt/io.hpp"

namespace lsadapt {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct Plot {
  std::string name;  // file stem
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Prior trajectories, validation AP per round, test FROC and PR curves.
/// Throws std::invalid_argument on an empty log.
std::vector<Plot> plots_from_log(const RunLog& log);

/// Static SVG line chart; all series share one pair of axes.
std::string render_svg(const Plot& plot);

/// Writes one two-column data file per series plus a "plots.index" file
/// describing titles, axes and labels.
void write_plot_data(const std::vector<Plot>& plots, const std::filesystem::path& dir);
std::vector<Plot> read_plot_data(const std::filesystem::path& dir);

/// Renders every plot described in `dir` from its data files into `<name>.svg`.
/// Returns the written paths.
std::vector<std::filesystem::path> render_plot_dir(const std::filesystem::path& dir);

/// Data files first, then SVGs rendered from the files just written, so a
/// later `render_plot_dir` reproduces identical output.
std::vector<std::filesystem::path> write_report(const RunLog& log, const std::filesystem::path& dir);

}  // namespace lsadapt
