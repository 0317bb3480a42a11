// Copyright 2026 The Gridlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Trajectory rendering. An episode is split into segments in which no cell is
// visited twice; each segment is drawn over the maze with one symbol per
// visited cell (the proposed action), failed actions boxed, and the previous
// segment's path shown as a ghost.

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gridlab/gridworld.hpp"
#include "gridlab/stochasticity.hpp"
#include "json.hpp"

namespace gridlab {

struct FrameRange {
  std::size_t begin = 0;  // frame indices [begin, end)
  std::size_t end = 0;
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

struct Segment {
  FrameRange frames;
  std::optional<FrameRange> ghost;  // the previous segment
  double cumulative = 0.0;          // reward at the end of the segment
};

/// Greedy split: a new segment starts when the next frame's cell already
/// occurs in the current one.
inline std::vector<Segment> segment_trace(std::span<const Frame> frames) {
  if (frames.empty()) throw ContractViolation("segment_trace: empty trace");
  std::vector<Segment> out;
  std::set<Cell> seen;
  std::size_t begin = 0;
  auto close = [&](std::size_t end) {
    Segment s;
    s.frames = {begin, end};
    if (!out.empty()) s.ghost = out.back().frames;
    s.cumulative = frames[end - 1].cumulative;
    out.push_back(s);
  };
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!seen.insert(frames[i].agent).second) {
      close(i);
      begin = i;
      seen = {frames[i].agent};
    }
  }
  close(frames.size());
  return out;
}

inline std::vector<Segment> segment_trace(const EpisodeTrace& trace) {
  return segment_trace(trace.frames);
}

inline char action_glyph(Action a) {
  switch (a) {
    case Action::kUp: return '^';
    case Action::kDown: return 'v';
    case Action::kLeft: return '<';
    case Action::kRight: return '>';
    case Action::kStay: return 'x';
  }
  return '?';
}

namespace detail {

inline std::string format_reward(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r + 0.0);  // + 0.0 folds -0 into 0
  return buf;
}

// Objects still present when the segment starts.
inline std::array<bool, kNumObjects> present_at(std::span<const Frame> frames,
                                               std::size_t begin) {
  std::array<bool, kNumObjects> present;
  present.fill(true);
  for (std::size_t i = 0; i < begin; ++i)
    if (frames[i].consumed >= 0) present[std::size_t(frames[i].consumed)] = false;
  return present;
}

}  // namespace detail

/// Three characters per cell: "###" wall, " . " free, " k " object k,
/// " ~ " previous segment, " > " a visited cell with its proposed action and
/// "[>]" when that action failed. The header gives the frame range and the
/// cumulative reward at the end of the segment.
inline std::string render_text(const LevelConfig& level, std::span<const Frame> frames,
                               const Segment& seg) {
  const int n = level.size();
  std::vector<std::string> cells(std::size_t(n) * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      cells[std::size_t(r) * n + c] = level.layout.wall({r, c}) ? "###" : " . ";
  const auto present = detail::present_at(frames, seg.frames.begin);
  for (int o = 0; o < kNumObjects; ++o)
    if (present[std::size_t(o)]) {
      const Cell c = level.object_cells[std::size_t(o)];
      cells[std::size_t(c.row) * n + c.col] = std::string(" ") + char('0' + o) + " ";
    }
  if (seg.ghost)
    for (std::size_t i = seg.ghost->begin; i < seg.ghost->end; ++i) {
      const Cell c = frames[i].agent;
      cells[std::size_t(c.row) * n + c.col] = " ~ ";
    }
  for (std::size_t i = seg.frames.begin; i < seg.frames.end; ++i) {
    const Frame& f = frames[i];
    const char g = action_glyph(f.proposed);
    cells[std::size_t(f.agent.row) * n + f.agent.col] =
        f.failed() ? std::string("[") + g + "]" : std::string(" ") + g + " ";
  }
  std::ostringstream os;
  os << "frames " << frames[seg.frames.begin].index << '-' << frames[seg.frames.end - 1].index
     << " reward " << detail::format_reward(seg.cumulative) << '\n';
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) os << cells[std::size_t(r) * n + c];
    os << '\n';
  }
  return os.str();
}

inline std::string render_text(const EpisodeTrace& trace) {
  std::string out;
  for (const auto& seg : segment_trace(trace)) {
    if (!out.empty()) out += '\n';
    out += render_text(*trace.level, trace.frames, seg);
  }
  return out;
}

struct RenderStyle {
  int cell_px = 24;
  int panels_per_row = 4;
  std::string light = "#c6dbef";  // first frame of a segment
  std::string dark = "#08306b";   // last frame
  std::string ghost = "#d9d9d9";
  std::string wall = "#000000";
  std::string fail = "#e41a1c";
  std::array<std::string, kNumObjects> objects = {"#ffd92f", "#e41a1c", "#377eb8", "#4d4d4d",
                                                  "#984ea3"};
};

namespace detail {

inline std::array<int, 3> parse_hex(const std::string& s) {
  auto h = [&](std::size_t i) { return std::stoi(s.substr(i, 2), nullptr, 16); };
  return {h(1), h(3), h(5)};
}

inline std::string lerp_color(const std::string& a, const std::string& b, double t) {
  const auto ca = parse_hex(a), cb = parse_hex(b);
  char buf[8];
  int v[3];
  for (int i = 0; i < 3; ++i) v[i] = int(std::lround(ca[i] + (cb[i] - ca[i]) * t));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", v[0], v[1], v[2]);
  return buf;
}

// Arrow or cross inside a cell whose top-left corner is (x, y).
inline std::string glyph_svg(Action a, int x, int y, int px) {
  const double c = px / 2.0, r = px * 0.3;
  auto pt = [&](double dx, double dy) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.1f,%.1f", x + c + dx, y + c + dy);
    return std::string(buf);
  };
  std::ostringstream os;
  if (a == Action::kStay) {
    os << "<path d=\"M" << pt(-r, -r) << " L" << pt(r, r) << " M" << pt(r, -r) << " L"
       << pt(-r, r) << "\" stroke=\"#ffffff\" stroke-width=\"2\"/>";
    return os.str();
  }
  // arrow pointing right, rotated per direction
  double dx = 1, dy = 0;
  if (a == Action::kUp) dx = 0, dy = -1;
  if (a == Action::kDown) dx = 0, dy = 1;
  if (a == Action::kLeft) dx = -1, dy = 0;
  const double px_ = -dy, py_ = dx;  // perpendicular
  os << "<path d=\"M" << pt(-r * dx, -r * dy) << " L" << pt(r * dx, r * dy) << " M"
     << pt(r * dx * 0.2 + r * 0.5 * px_, r * dy * 0.2 + r * 0.5 * py_) << " L"
     << pt(r * dx, r * dy) << " L"
     << pt(r * dx * 0.2 - r * 0.5 * px_, r * dy * 0.2 - r * 0.5 * py_)
     << "\" stroke=\"#ffffff\" stroke-width=\"2\" fill=\"none\"/>";
  return os.str();
}

}  // namespace detail

/// One panel per segment, laid out in rows of `style.panels_per_row`.
inline std::string render_svg(const LevelConfig& level, std::span<const Frame> frames,
                              std::span<const Segment> segments, const RenderStyle& style = {}) {
  const int n = level.size(), px = style.cell_px;
  const int header = px, gap = px / 2;
  const int panel_w = n * px, panel_h = n * px + header;
  const int cols = std::max(1, std::min<int>(style.panels_per_row, int(segments.size())));
  const int rows = (int(segments.size()) + cols - 1) / cols;
  const int width = cols * panel_w + (cols + 1) * gap;
  const int height = std::max(1, rows) * panel_h + (rows + 1) * gap;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"monospace\" font-size=\"" << px / 2 << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    const int ox = gap + int(s % std::size_t(cols)) * (panel_w + gap);
    const int oy = gap + int(s / std::size_t(cols)) * (panel_h + gap);
    os << "<g>\n<text x=\"" << ox << "\" y=\"" << oy + header * 2 / 3 << "\">frames "
       << frames[seg.frames.begin].index << '-' << frames[seg.frames.end - 1].index
       << " reward " << detail::format_reward(seg.cumulative) << "</text>\n";
    const int gy = oy + header;
    auto rect = [&](Cell c, const std::string& fill, const std::string& extra = "") {
      os << "<rect x=\"" << ox + c.col * px << "\" y=\"" << gy + c.row * px << "\" width=\""
         << px << "\" height=\"" << px << "\" fill=\"" << fill << "\"" << extra << "/>\n";
    };
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (level.layout.wall({r, c})) rect({r, c}, style.wall);
    if (seg.ghost)
      for (std::size_t i = seg.ghost->begin; i < seg.ghost->end; ++i)
        rect(frames[i].agent, style.ghost);
    const auto present = detail::present_at(frames, seg.frames.begin);
    for (int o = 0; o < kNumObjects; ++o) {
      if (!present[std::size_t(o)]) continue;
      const Cell c = level.object_cells[std::size_t(o)];
      os << "<circle cx=\"" << ox + c.col * px + px / 2 << "\" cy=\"" << gy + c.row * px + px / 2
         << "\" r=\"" << px * 2 / 5 << "\" fill=\"" << style.objects[std::size_t(o)] << "\"/>\n";
    }
    const std::size_t len = seg.frames.end - seg.frames.begin;
    for (std::size_t i = seg.frames.begin; i < seg.frames.end; ++i) {
      const Frame& f = frames[i];
      const double t = len > 1 ? double(i - seg.frames.begin) / double(len - 1) : 1.0;
      rect(f.agent, detail::lerp_color(style.light, style.dark, t));
      os << detail::glyph_svg(f.proposed, ox + f.agent.col * px, gy + f.agent.row * px, px)
         << '\n';
      if (f.failed())
        os << "<rect x=\"" << ox + f.agent.col * px + 1 << "\" y=\"" << gy + f.agent.row * px + 1
           << "\" width=\"" << px - 2 << "\" height=\"" << px - 2 << "\" fill=\"none\" stroke=\""
           << style.fail << "\" stroke-width=\"2\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string render_svg(const EpisodeTrace& trace, const RenderStyle& style = {}) {
  const auto segs = segment_trace(trace);
  return render_svg(*trace.level, trace.frames, segs, style);
}

/// One JSON object per frame, newline-terminated.
inline std::string trace_jsonl(const EpisodeTrace& trace) {
  std::string out;
  for (const Frame& f : trace.frames) {
    nlohmann::ordered_json j;
    j["index"] = f.index;
    j["row"] = f.agent.row;
    j["col"] = f.agent.col;
    j["proposed"] = std::string(to_string(f.proposed));
    j["executed"] = std::string(to_string(f.executed));
    j["reward"] = f.reward;
    j["cumulative"] = f.cumulative;
    j["done"] = f.done;
    j["bumped"] = f.bumped;
    j["consumed"] = f.consumed;
    j["failed"] = f.failed();
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace gridlab
