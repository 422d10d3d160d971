// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wit/training/trainer.hpp"

namespace wit::report {

/// Shortest text that parses back to the same double; "nan" for NaN.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline const char* kHistoryHeader =
    "epoch,phase,mean_xe1,mean_xe2,mean_reward,mean_alpha_key,keyframe_inside_event_fraction";

inline std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << kHistoryHeader << '\n';
  for (const auto& e : h)
    os << e.epoch << ',' << e.phase << ',' << fmt(e.mean_xe1) << ',' << fmt(e.mean_xe2) << ',' << fmt(e.mean_reward)
       << ',' << fmt(e.mean_alpha_key) << ',' << fmt(e.keyframe_inside_event_fraction) << '\n';
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_history_csv(const std::string& path, const TrainHistory& h) { write_text(path, history_csv(h)); }

inline TrainHistory parse_history_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kHistoryHeader) throw std::invalid_argument("history CSV: unexpected header");
  TrainHistory h;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 7 || c[1].size() != 1)
      throw std::invalid_argument("history CSV line " + std::to_string(lineno) + ": expected 7 fields");
    EpochStats e;
    e.epoch = std::stoul(c[0]);
    e.phase = c[1][0];
    e.mean_xe1 = parse_double(c[2]);
    e.mean_xe2 = parse_double(c[3]);
    e.mean_reward = parse_double(c[4]);
    e.mean_alpha_key = parse_double(c[5]);
    e.keyframe_inside_event_fraction = parse_double(c[6]);
    h.push_back(e);
  }
  return h;
}

inline TrainHistory read_history_csv(const std::string& path) { return parse_history_csv(read_text(path)); }

inline std::string metrics_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "metric,value\n"
     << "bleu4," << fmt(r.bleu4) << '\n'
     << "rouge_l," << fmt(r.rouge_l) << '\n'
     << "cider," << fmt(r.cider) << '\n'
     << "keyframe_inside_event_fraction," << fmt(r.keyframe_inside_fraction) << '\n'
     << "default_keyframe_inside_event_fraction," << fmt(r.default_inside_fraction) << '\n'
     << "videos," << r.count << '\n';
  return os.str();
}

/// One row per (video, frame): refocus weight and whether the frame is the
/// chosen key and inside the ground-truth event.
inline std::string refocus_csv(const EvalReport& r, const std::vector<video::VideoSample>& samples) {
  std::ostringstream os;
  os << "video_id,frame,alpha,is_key,in_event\n";
  for (std::size_t v = 0; v < r.videos.size(); ++v) {
    const auto& ve = r.videos[v];
    const auto& s = samples.at(v);
    for (std::size_t k = 0; k < ve.alpha.size(); ++k)
      os << ve.id << ',' << k << ',' << fmt(ve.alpha[k]) << ',' << (k == ve.i_key ? 1 : 0) << ','
         << (s.event.contains(k) ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Decoder attention weights: kind is T (temporal, index = frame) or S
/// (spatial, index = flattened region); pass is 1 or 2.
inline std::string attention_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "video_id,pass,step,kind,index,weight\n";
  for (const auto& ve : r.videos)
    for (std::size_t pass = 0; pass < 2; ++pass) {
      auto dump = [&](const std::vector<Tensor>& ws, char kind) {
        for (std::size_t t = 0; t < ws.size(); ++t)
          for (std::size_t i = 0; i < ws[t].size(); ++i)
            os << ve.id << ',' << pass + 1 << ',' << t << ',' << kind << ',' << i << ',' << fmt(ws[t][i]) << '\n';
      };
      dump(ve.temporal_weights[pass], 'T');
      dump(ve.spatial_weights[pass], 'S');
    }
  return os.str();
}

/// Rows of a refocus CSV grouped per video: (video_id, weights, key, event frames).
struct RefocusRow {
  std::string video;
  std::vector<double> alpha;
  std::size_t key = 0;
  std::vector<bool> in_event;
};

inline std::vector<RefocusRow> parse_refocus_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "video_id,frame,alpha,is_key,in_event")
    throw std::invalid_argument("refocus CSV: unexpected header");
  std::vector<RefocusRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 5) throw std::invalid_argument("refocus CSV: expected 5 fields in '" + line + "'");
    if (rows.empty() || rows.back().video != c[0]) rows.push_back({c[0], {}, 0, {}});
    auto& r = rows.back();
    if (std::stoul(c[1]) != r.alpha.size()) throw std::invalid_argument("refocus CSV: frames out of order for " + c[0]);
    if (c[3] == "1") r.key = r.alpha.size();
    r.alpha.push_back(parse_double(c[2]));
    r.in_event.push_back(c[4] == "1");
  }
  return rows;
}

}  // namespace wit::report
