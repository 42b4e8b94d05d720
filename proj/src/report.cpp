#include "lsadapt/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lsadapt {
namespace fs = std::filesystem;

namespace {

constexpr const char* kIndexFile = "plots.index";
constexpr const char* kIndexHeader = "lsadapt-plots";

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 64;
constexpr double kRight = 170;
constexpr double kTop = 36;
constexpr double kBottom = 48;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string slug(std::string_view text) {
  std::string out;
  for (char c : text) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void check_field(const std::string& text) {
  if (text.find_first_of("\t\n") != std::string::npos) {
    throw std::invalid_argument("plot text may not contain tabs or newlines: " + text);
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool include_zero) {
    if (!std::isfinite(lo)) lo = hi = 0.0;
    if (include_zero) {
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
    }
    if (hi - lo < 1e-12) {
      const double pad = std::abs(hi) > 0 ? std::abs(hi) * 0.5 : 0.5;
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::vector<Plot> plots_from_log(const RunLog& log) {
  if (log.rounds.empty() && log.tests.empty()) throw std::invalid_argument("run log is empty");

  std::vector<std::string> arms;
  auto note_arm = [&](const std::string& a) {
    if (std::find(arms.begin(), arms.end(), a) == arms.end()) arms.push_back(a);
  };
  for (const auto& r : log.rounds) note_arm(r.arm);
  for (const auto& t : log.tests) note_arm(t.arm);

  std::vector<Plot> plots;
  if (!log.rounds.empty()) {
    Plot mu{"prior_mu", "Estimated lesions per subject", "round", "mu", {}};
    Plot ap{"val_ap", "Validation AP@0.1 per round", "round", "AP@0.1", {}};
    for (const auto& arm : arms) {
      Series m{arm, {}}, a{arm, {}};
      std::vector<Series> bins;
      for (const auto& r : log.rounds) {
        if (r.arm != arm) continue;
        m.points.emplace_back(r.round, r.mu);
        a.points.emplace_back(r.round, r.validation.ap[0]);
        if (bins.size() < r.hist.size()) {
          for (std::size_t b = bins.size(); b < r.hist.size(); ++b) {
            bins.push_back({"bin " + std::to_string(b + 1), {}});
          }
        }
        for (std::size_t b = 0; b < r.hist.size(); ++b) bins[b].points.emplace_back(r.round, r.hist[b]);
      }
      if (m.points.empty()) continue;
      mu.series.push_back(std::move(m));
      ap.series.push_back(std::move(a));
      plots.push_back({"prior_hist_" + slug(arm), "Size histogram prior: " + arm, "round",
                       "h", std::move(bins)});
    }
    plots.insert(plots.begin(), std::move(mu));
    plots.push_back(std::move(ap));
  }
  if (!log.tests.empty()) {
    Plot froc_plot{"froc", "Test FROC (IoU 0.1)", "false positives per scan", "sensitivity", {}};
    Plot pr_plot{"pr", "Test precision-recall (IoU 0.1)", "recall", "precision", {}};
    for (const auto& t : log.tests) {
      Series f{t.arm, {}}, p{t.arm, {}};
      for (const auto& pt : t.froc.points) f.points.emplace_back(pt.fp_per_scan, pt.sensitivity);
      for (const auto& pt : t.pr) p.points.emplace_back(pt.recall, pt.precision);
      froc_plot.series.push_back(std::move(f));
      pr_plot.series.push_back(std::move(p));
    }
    plots.push_back(std::move(froc_plot));
    plots.push_back(std::move(pr_plot));
  }
  return plots;
}

std::string render_svg(const Plot& plot) {
  Range xr, yr;
  for (const auto& s : plot.series) {
    for (const auto& [x, y] : s.points) {
      xr.add(x);
      yr.add(y);
    }
  }
  xr.finish(false);
  yr.finish(true);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << xml_escape(plot.title) << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / kTicks;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / kTicks;
    const std::string x = fmt("%.2f", px(xv));
    const std::string y = fmt("%.2f", py(yv));
    out << "<line x1=\"" << x << "\" y1=\"" << kTop + ph << "\" x2=\"" << x << "\" y2=\"" << kTop + ph + 4
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << fmt("%.3g", xv) << "</text>\n";
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << y << "\" x2=\"" << kLeft << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
        << fmt("%.3g", yv) << "</text>\n";
  }
  out << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(plot.x_label) << "</text>\n";
  out << "<text transform=\"translate(16 " << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(plot.y_label) << "</text>\n";

  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const Series& s = plot.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    if (s.points.size() >= 2) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < s.points.size(); ++k) {
        if (k) out << ' ';
        out << fmt("%.2f", px(s.points[k].first)) << ',' << fmt("%.2f", py(s.points[k].second));
      }
      out << "\"/>\n";
    } else {
      for (const auto& [x, y] : s.points) {
        out << "<circle cx=\"" << fmt("%.2f", px(x)) << "\" cy=\"" << fmt("%.2f", py(y))
            << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = kTop + 8 + 16 * static_cast<double>(i);
    const double lx = kWidth - kRight + 12;
    out << "<line x1=\"" << lx << "\" y1=\"" << ly << "\" x2=\"" << lx + 18 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << lx + 24 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">"
        << xml_escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_plot_data(const std::vector<Plot>& plots, const fs::path& dir) {
  fs::create_directories(dir);
  std::string index = std::string(kIndexHeader) + " " + std::to_string(kFormatMajor) + "\n";
  std::set<std::string> names;
  for (const auto& p : plots) {
    for (const auto* f : {&p.name, &p.title, &p.x_label, &p.y_label}) check_field(*f);
    if (!names.insert(p.name).second) throw std::invalid_argument("duplicate plot name " + p.name);
    index += "plot\t" + p.name + "\t" + p.title + "\t" + p.x_label + "\t" + p.y_label + "\n";
    for (std::size_t i = 0; i < p.series.size(); ++i) {
      const Series& s = p.series[i];
      check_field(s.label);
      const std::string file = p.name + "__" + std::to_string(i) + ".dat";
      write_file_atomic(dir / file, write_columns(s.points, p.x_label + " | " + p.y_label + " | " + s.label));
      index += "series\t" + s.label + "\t" + file + "\n";
    }
  }
  write_file_atomic(dir / kIndexFile, index);
}

std::vector<Plot> read_plot_data(const fs::path& dir) {
  std::istringstream in(read_file(dir / kIndexFile));
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string tag;
  int major = 0;
  if (!(header >> tag >> major) || tag != kIndexHeader) throw FormatError("not a plot index");
  if (major != kFormatMajor) throw FormatError("unsupported plot index version " + std::to_string(major));

  std::vector<Plot> plots;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f[0] == "plot" && f.size() == 5) {
      plots.push_back({f[1], f[2], f[3], f[4], {}});
    } else if (f[0] == "series" && f.size() == 3 && !plots.empty()) {
      if (f[2].find('/') != std::string::npos) throw FormatError("series path must be local: " + f[2]);
      plots.back().series.push_back({f[1], read_columns(read_file(dir / f[2]))});
    } else {
      throw FormatError("bad plot index line: " + line);
    }
  }
  return plots;
}

std::vector<fs::path> render_plot_dir(const fs::path& dir) {
  std::vector<fs::path> written;
  for (const auto& p : read_plot_data(dir)) {
    const fs::path path = dir / (p.name + ".svg");
    write_file_atomic(path, render_svg(p));
    written.push_back(path);
  }
  return written;
}

std::vector<fs::path> write_report(const RunLog& log, const fs::path& dir) {
  write_plot_data(plots_from_log(log), dir);
  return render_plot_dir(dir);
}

}  // namespace lsadapt
