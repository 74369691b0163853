// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pointforge/geometry.hpp"

namespace pf {

namespace {

constexpr double kWidth = 720, kHeight = 420, kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  return s.str();
}

void axes(std::ostringstream& s, double y0, double y1) {
  const double x_end = kWidth - kRight, y_end = kHeight - kBottom;
  s << "<line x1=\"" << kLeft << "\" y1=\"" << y_end << "\" x2=\"" << x_end << "\" y2=\"" << y_end
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << y_end
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    const double y = y_end - (y_end - kTop) * i / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cols;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cols.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cols.push_back(cur);
  return cols;
}

double to_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad number '" + s + "'");
  }
}

}  // namespace

std::vector<VoxelStat> voxel_stats(std::span<const PointCloud> clouds, const std::string& split, float voxel_size) {
  std::vector<VoxelStat> out;
  for (const auto& c : clouds) {
    const VoxelGrid grid = build_voxel_grid(c, voxel_size);
    VoxelStat st{c.name, split, c.size(), grid.cells.size(), 0};
    for (const auto& cell : grid.cells) st.max_occupancy = std::max(st.max_occupancy, cell.members.size());
    out.push_back(st);
  }
  return out;
}

void write_voxel_stats(const std::filesystem::path& path, std::span<const VoxelStat> stats) {
  std::ofstream f(path, std::ios::binary);
  f << "name,split,points,voxels,max_occupancy\n";
  for (const auto& s : stats) {
    f << s.name << ',' << s.split << ',' << s.points << ',' << s.voxels << ',' << s.max_occupancy << '\n';
  }
  if (!f) throw Error("cannot write " + path.string());
}

void write_label_histogram(const std::filesystem::path& path, const LabelHistogram& hist, const LabelVocabulary& vocab) {
  std::ofstream f(path, std::ios::binary);
  f << "index,label,count\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (vocab.ignore_index() && static_cast<int>(i) == *vocab.ignore_index()) continue;
    f << i << ',' << vocab.name(static_cast<int>(i)) << ',' << hist.counts[i] << '\n';
  }
  if (!f) throw Error("cannot write " + path.string());
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path.string() + ": empty CSV");
  t.header = split_line(line);
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    auto cols = split_line(line);
    if (cols.size() != t.header.size()) throw ParseError(path.string() + ": ragged row '" + line + "'");
    t.rows.push_back(std::move(cols));
  }
  return t;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, std::span<const Series> series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return kHeight - kBottom - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream s;
  s << header(title);
  axes(s, y0, y1);
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 20 << "\" text-anchor=\"middle\">" << escape(x_label)
    << "</text>\n";
  s << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << fmt(x0)
    << "</text>\n";
  s << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
    << fmt(x1) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (std::isnan(ser.y[i])) {
        pen = false;
        continue;
      }
      path += (pen ? " L" : " M") + fmt(px(ser.x[i])) + "," + fmt(py(ser.y[i]));
      pen = true;
    }
    if (!path.empty()) {
      s << "<path d=\"" << path.substr(1) << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    }
    const double ly = kTop + 18.0 * static_cast<double>(k);
    s << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << color
      << "\"/>\n";
    s << "<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << ly + 10 << "\">" << escape(ser.name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_bar_chart(const std::string& title, std::span<const std::string> labels, std::span<const double> values) {
  if (labels.size() != values.size()) throw Error("bar chart: label and value counts differ");
  double y1 = 0.0;
  for (double v : values) y1 = std::max(y1, v);
  if (y1 <= 0.0) y1 = 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
  std::ostringstream s;
  s << header(title);
  axes(s, 0.0, y1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = values[i] / y1 * ph;
    const double x = kLeft + slot * static_cast<double>(i);
    s << "<rect x=\"" << fmt(x + slot * 0.1) << "\" y=\"" << fmt(kHeight - kBottom - h) << "\" width=\""
      << fmt(slot * 0.8) << "\" height=\"" << fmt(h) << "\" fill=\"" << kPalette[0] << "\"><title>"
      << escape(labels[i]) << ": " << fmt(values[i]) << "</title></rect>\n";
    if (values.size() <= 32) {
      const double cx = x + slot / 2, cy = kHeight - kBottom + 12;
      s << "<text x=\"" << fmt(cx) << "\" y=\"" << fmt(cy) << "\" font-size=\"9\" text-anchor=\"end\" transform=\"rotate(-40 "
        << fmt(cx) << ' ' << fmt(cy) << ")\">" << escape(labels[i]) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string plot_csv(const std::filesystem::path& csv) {
  const CsvTable t = read_csv(csv);
  std::string chart;
  const auto has = [&](const char* name) { return std::find(t.header.begin(), t.header.end(), name) != t.header.end(); };
  if (has("epoch") && has("train_loss")) {
    std::vector<Series> metrics, loss;
    for (const char* col : {"val_acc", "val_piou", "harmonic", "train_loss"}) {
      Series s{col, {}, {}};
      bool any = false;
      for (const auto& row : t.rows) {
        s.x.push_back(to_double(row[t.column("epoch")]));
        s.y.push_back(to_double(row[t.column(col)]));
        any = any || !std::isnan(s.y.back());
      }
      if (any) (std::string(col) == "train_loss" ? loss : metrics).push_back(std::move(s));
    }
    // Loss and metrics live on different scales; metrics win when present.
    chart = metrics.empty() ? svg_line_chart("Training loss: " + csv.filename().string(), "epoch", loss)
                            : svg_line_chart("Validation metrics: " + csv.filename().string(), "epoch", metrics);
  } else if (has("voxels")) {
    const std::size_t c = t.column("voxels");
    std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0;
    for (const auto& row : t.rows) {
      const auto v = static_cast<std::size_t>(to_double(row[c]));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const std::size_t nbins = 10;
    const double width = hi > lo ? static_cast<double>(hi - lo + 1) / nbins : 1.0;
    std::vector<double> counts(nbins, 0.0);
    std::vector<std::string> labels;
    for (const auto& row : t.rows) {
      const auto v = static_cast<std::size_t>(to_double(row[c]));
      const auto b = std::min(nbins - 1, static_cast<std::size_t>(static_cast<double>(v - lo) / width));
      counts[b] += 1.0;
    }
    for (std::size_t b = 0; b < nbins; ++b) labels.push_back(fmt(static_cast<double>(lo) + width * static_cast<double>(b)));
    chart = svg_bar_chart("Voxels per cloud: " + csv.filename().string(), labels, counts);
  } else if (has("label") && has("count")) {
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& row : t.rows) {
      labels.push_back(row[t.column("label")]);
      values.push_back(to_double(row[t.column("count")]));
    }
    chart = svg_bar_chart("Label histogram: " + csv.filename().string(), labels, values);
  } else {
    throw ParseError(csv.string() + ": unrecognized CSV header");
  }
  std::ostringstream data;
  data << "<!-- data: " << csv.filename().string() << "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) data << (i ? "," : "") << t.header[i];
  data << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) data << (i ? "," : "") << row[i];
    data << '\n';
  }
  data << "-->\n";
  const auto close = chart.rfind("</svg>");
  chart.insert(close, data.str());
  return chart;
}

}  // namespace pf
