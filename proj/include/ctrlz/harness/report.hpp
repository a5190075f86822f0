// Copyright (C) 2026 The ctrlz-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrlz/harness/experiment.hpp"

namespace ctrlz::harness {

using ordered_json = nlohmann::ordered_json;

/// Shortest round-trip decimal form; "inf", "-inf", "nan" for non-finite.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline ordered_json event_json(const ExplorationEvent& ev, const std::string& label, int run_index) {
  ordered_json j;
  j["strategy"] = label;
  j["run_index"] = run_index;
  j["t"] = ev.t;
  j["trigger"] = to_string(ev.trigger);
  j["depths_tried"] = ev.depths_tried;
  j["candidates_evaluated"] = ev.candidates_evaluated;
  j["terminal_depth"] = ev.terminal_depth;
  j["terminated_by"] = to_string(ev.terminated_by);
  j["accepted_score"] = ev.accepted_score;
  j["default_score"] = ev.default_score;
  // -inf (no accepted score yet) has no JSON spelling.
  if (std::isfinite(ev.previous_score)) j["previous_score"] = ev.previous_score;
  else j["previous_score"] = nullptr;
  j["regressed"] = ev.regressed();
  return j;
}

inline ordered_json stats_json(const AggregateStats& s) {
  ordered_json j;
  j["runs"] = s.runs;
  j["mean_final_reward"] = s.mean_final_reward;
  j["stddev_final_reward"] = s.stddev_final_reward;
  j["escape_rate"] = s.escape_rate;
  j["mean_nfe_avg"] = s.mean_nfe_avg;
  j["mean_reward_calls"] = s.mean_reward_calls;
  j["total_events"] = s.total_events;
  ordered_json init = ordered_json::array();
  for (auto it = s.initiation_histogram.rbegin(); it != s.initiation_histogram.rend(); ++it) {
    init.push_back({{"t", it->first}, {"count", it->second}});
  }
  j["initiation_histogram"] = std::move(init);
  ordered_json depth = ordered_json::array();
  for (const auto& [key, count] : s.depth_histogram) {
    depth.push_back({{"depth", key.first}, {"terminated_by", to_string(key.second)}, {"count", count}});
  }
  j["depth_histogram"] = std::move(depth);
  return j;
}

inline std::string runs_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  os << "run_index,strategy,final_reward,escaped,nfe_total,nfe_avg,reward_calls,seed\n";
  for (const auto& res : results) {
    for (const auto& r : res.runs) {
      os << r.run_index << ',' << res.label << ',' << format_number(r.final_reward) << ','
         << (r.escaped ? 1 : 0) << ',' << r.result.nfe_total << ',' << format_number(r.result.nfe_avg)
         << ',' << r.result.reward_calls << ',' << r.result.seed << '\n';
    }
  }
  return os.str();
}

inline std::string events_jsonl(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  for (const auto& res : results) {
    for (const auto& r : res.runs) {
      for (const auto& ev : r.result.events) os << event_json(ev, res.label, r.run_index).dump() << '\n';
    }
  }
  return os.str();
}

inline std::string summary_json(const std::vector<ExperimentResult>& results) {
  ordered_json doc;
  ordered_json arr = ordered_json::array();
  for (const auto& res : results) {
    ordered_json j;
    j["strategy"] = res.label;
    j.update(stats_json(res.stats));
    arr.push_back(std::move(j));
  }
  doc["experiments"] = std::move(arr);
  return doc.dump(2) + "\n";
}

/// Columns: strategy, kind in {initiation, depth}, bucket, count. Depth
/// buckets read "<depth>:<terminated_by>".
inline std::string histograms_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream os;
  os << "strategy,kind,bucket,count\n";
  for (const auto& res : results) {
    const auto& s = res.stats;
    for (auto it = s.initiation_histogram.rbegin(); it != s.initiation_histogram.rend(); ++it) {
      os << res.label << ",initiation," << it->first << ',' << it->second << '\n';
    }
    for (const auto& [key, count] : s.depth_histogram) {
      os << res.label << ",depth," << key.first << ':' << to_string(key.second) << ',' << count << '\n';
    }
  }
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
}

/// Writes runs.csv, events.jsonl, summary.json and histograms.csv into `dir`,
/// plus a metadata.json sidecar holding the wall-clock timestamp. Only the
/// sidecar differs between reruns of the same configuration.
inline void write_outputs(const std::filesystem::path& dir, const std::vector<ExperimentResult>& results,
                          const std::string& command) {
  std::filesystem::create_directories(dir);
  write_file(dir / "runs.csv", runs_csv(results));
  write_file(dir / "events.jsonl", events_jsonl(results));
  write_file(dir / "summary.json", summary_json(results));
  write_file(dir / "histograms.csv", histograms_csv(results));
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  ordered_json meta;
  meta["command"] = command;
  meta["unix_time"] = now;
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

}  // namespace ctrlz::harness
