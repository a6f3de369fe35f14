// Copyright 2026 The Airpath MPC Authors
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

#include "airpath/compare.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace airpath {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

std::uint64_t parse_u64(const std::string& token) {
  if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("invalid seed '" + token + "'");
  }
  try {
    return std::stoull(token);
  } catch (const std::exception&) {
    throw ConfigError("invalid seed '" + token + "'");
  }
}

std::string cell_name(FfMode mode, std::uint64_t seed) {
  return std::string(to_string(mode)) + "_seed" + std::to_string(seed);
}

CompareCell run_cell(const RunConfig& config, const ModelGrid& grid, const std::vector<PenaltyGrid>& penalties,
                     const SetpointMap& map, FfMode mode, std::uint64_t seed,
                     const std::optional<std::filesystem::path>& cell_dir) {
  CompareCell cell;
  cell.mode = mode;
  cell.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    SimConfig sim = config.sim;
    sim.ff_mode = mode;
    const Scenario scenario = build_scenario(config.scenario, seed, map);
    const SimTrace trace = run_closed_loop(sim, grid, map, scenario, seed, penalties.empty() ? nullptr : &penalties);
    cell.metrics = compute_metrics(trace);
    cell.steps = trace.rows.size();
    if (cell_dir) {
      const std::filesystem::path dir = *cell_dir / cell_name(mode, seed);
      std::filesystem::create_directories(dir);
      std::ostringstream csv;
      write_trace_csv(csv, trace);
      write_text_file_atomic(dir / "trace.csv", csv.str());
      write_text_file_atomic(dir / "metrics.json", metrics_to_json(cell.metrics) + "\n");
    }
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

double reduction_pct(double baseline, double value) { return 100.0 * (baseline - value) / baseline; }

std::string format_delta(const std::optional<double>& pct) {
  if (!pct) return "";
  char buf[48];
  // Arrows follow the baseline-relative convention: down means smaller error.
  std::snprintf(buf, sizeof buf, " (%s %.1f%%)", *pct >= 0.0 ? "↓" : "↑", std::fabs(*pct));
  return buf;
}

// Display width of UTF-8 text (arrows count as one column).
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  const std::size_t w = display_width(s);
  if (w >= width) return s;
  const std::string fill(width - w, ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

const char* scheme_label(FfMode mode) {
  switch (mode) {
    case FfMode::kNone: return "FB only";
    case FfMode::kLookupTable: return "LUT FF + FB";
    case FfMode::kMpc: return "FF MPC + FB";
  }
  return "?";
}

std::vector<FfMode> parse_mode_list(const std::string& text) {
  std::vector<FfMode> modes;
  for (const std::string& token : split(text, ',')) {
    if (token.empty()) throw ConfigError("--modes: empty mode token");
    FfMode m;
    try {
      m = parse_ff_mode(token);
    } catch (const ConfigError&) {
      throw ConfigError("--modes: unknown mode '" + token + "' (expected none, lut or mpc)");
    }
    if (std::find(modes.begin(), modes.end(), m) != modes.end()) {
      throw ConfigError("--modes: duplicate mode '" + token + "'");
    }
    modes.push_back(m);
  }
  if (modes.empty()) throw ConfigError("--modes: no modes given");
  return modes;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& token : split(text, ',')) {
    const auto dots = token.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(parse_u64(token));
      continue;
    }
    const std::uint64_t lo = parse_u64(trim(token.substr(0, dots)));
    const std::uint64_t hi = parse_u64(trim(token.substr(dots + 2)));
    if (hi < lo) throw ConfigError("--seeds: empty range '" + token + "'");
    if (hi - lo >= 100000) throw ConfigError("--seeds: range '" + token + "' too large");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw ConfigError("--seeds: no seeds given");
  return seeds;
}

std::vector<CompareRow> aggregate_cells(const std::vector<CompareCell>& cells, const std::vector<FfMode>& modes) {
  std::vector<CompareRow> rows;
  for (FfMode mode : modes) {
    CompareRow row;
    row.mode = mode;
    auto add = [](SignalMetrics& acc, const SignalMetrics& s) {
      acc.mean_abs_error += s.mean_abs_error;
      acc.peak_abs_error += s.peak_abs_error;
      acc.overshoot_pct += s.overshoot_pct;
      acc.settling_time += s.settling_time;
    };
    for (const CompareCell& c : cells) {
      if (c.mode != mode) continue;
      if (!c.ok) {
        ++row.cells_failed;
        continue;
      }
      ++row.cells_ok;
      add(row.mean.p_im, c.metrics.p_im);
      add(row.mean.chi_egr, c.metrics.chi_egr);
      row.mean.step_events += c.metrics.step_events;
    }
    if (row.cells_ok > 0) {
      const double n = static_cast<double>(row.cells_ok);
      for (SignalMetrics* s : {&row.mean.p_im, &row.mean.chi_egr}) {
        s->mean_abs_error /= n;
        s->peak_abs_error /= n;
        s->overshoot_pct /= n;
        s->settling_time /= n;
      }
      row.mean.step_events = static_cast<std::size_t>(std::lround(static_cast<double>(row.mean.step_events) / n));
    }
    rows.push_back(row);
  }
  const auto base = std::find_if(rows.begin(), rows.end(),
                                 [](const CompareRow& r) { return r.mode == FfMode::kNone && r.cells_ok > 0; });
  if (base != rows.end()) {
    for (CompareRow& r : rows) {
      if (r.cells_ok == 0 || r.mode == FfMode::kNone) continue;
      if (base->mean.p_im.mean_abs_error > 0.0) {
        r.reduction_p_im = reduction_pct(base->mean.p_im.mean_abs_error, r.mean.p_im.mean_abs_error);
      }
      if (base->mean.chi_egr.mean_abs_error > 0.0) {
        r.reduction_chi_egr = reduction_pct(base->mean.chi_egr.mean_abs_error, r.mean.chi_egr.mean_abs_error);
      }
    }
  }
  return rows;
}

CompareResult run_comparison(const RunConfig& config, const ModelGrid& grid,
                             const std::vector<PenaltyGrid>& penalties, const CompareOptions& options,
                             const std::function<void(const CompareCell&)>& on_cell) {
  if (options.modes.empty() || options.seeds.empty()) throw ConfigError("comparison needs modes and seeds");
  const SetpointMap map = SetpointMap::from_grid(grid);

  struct Job {
    FfMode mode;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (FfMode m : options.modes) {
    for (std::uint64_t s : options.seeds) jobs.push_back({m, s});
  }

  CompareResult result;
  result.cells.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      result.cells[i] = run_cell(config, grid, penalties, map, jobs[i].mode, jobs[i].seed, options.cell_dir);
      if (on_cell) {
        std::lock_guard<std::mutex> lock(report_mutex);
        on_cell(result.cells[i]);
      }
    }
  };
  const unsigned n_threads = std::clamp<unsigned>(options.jobs, 1u, static_cast<unsigned>(jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  result.rows = aggregate_cells(result.cells, options.modes);
  return result;
}

std::string comparison_table_text(const CompareResult& result) {
  std::vector<std::vector<std::string>> table;
  table.push_back({"Control scheme", "e_pim [bar]", "e_egr [-]", "seeds"});
  for (const CompareRow& r : result.rows) {
    std::string p = "failed", c = "failed";
    if (r.cells_ok > 0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", r.mean.p_im.mean_abs_error);
      p = buf + (r.mode == FfMode::kNone ? std::string() : format_delta(r.reduction_p_im));
      std::snprintf(buf, sizeof buf, "%.4f", r.mean.chi_egr.mean_abs_error);
      c = buf + (r.mode == FfMode::kNone ? std::string() : format_delta(r.reduction_chi_egr));
    }
    std::string seeds = std::to_string(r.cells_ok);
    if (r.cells_failed > 0) seeds += " (" + std::to_string(r.cells_failed) + " failed)";
    table.push_back({scheme_label(r.mode), p, c, seeds});
  }
  std::vector<std::size_t> width(4, 0);
  for (const auto& row : table) {
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], display_width(row[k]));
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t k = 0; k < table[i].size(); ++k) {
      if (k > 0) os << "  ";
      os << pad(table[i][k], width[k], false);
    }
    os << '\n';
    if (i == 0) {
      std::size_t total = 2 * (width.size() - 1);
      for (std::size_t w : width) total += w;
      os << std::string(total, '-') << '\n';
    }
  }
  return os.str();
}

std::string comparison_to_json(const CompareResult& result) {
  using nlohmann::json;
  auto sig = [](const SignalMetrics& s) {
    return json{{"mean_abs_error", s.mean_abs_error},
                {"peak_abs_error", s.peak_abs_error},
                {"overshoot_pct", s.overshoot_pct},
                {"settling_time", s.settling_time}};
  };
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const CompareRow& r : result.rows) {
    rows.push_back({{"mode", to_string(r.mode)},
                    {"scheme", scheme_label(r.mode)},
                    {"cells_ok", r.cells_ok},
                    {"cells_failed", r.cells_failed},
                    {"p_im", sig(r.mean.p_im)},
                    {"chi_egr", sig(r.mean.chi_egr)},
                    {"reduction_pct", {{"p_im", opt(r.reduction_p_im)}, {"chi_egr", opt(r.reduction_chi_egr)}}}});
  }
  json cells = json::array();
  for (const CompareCell& c : result.cells) {
    json cj{{"mode", to_string(c.mode)}, {"seed", c.seed}, {"ok", c.ok}, {"wall_seconds", c.wall_seconds}};
    if (c.ok) {
      cj["steps"] = c.steps;
      cj["p_im"] = sig(c.metrics.p_im);
      cj["chi_egr"] = sig(c.metrics.chi_egr);
      cj["step_events"] = c.metrics.step_events;
    } else {
      cj["error"] = c.error;
    }
    cells.push_back(std::move(cj));
  }
  return json{{"table", rows}, {"cells", cells}}.dump(2);
}

}  // namespace airpath
