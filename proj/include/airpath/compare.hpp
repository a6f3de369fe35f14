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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "airpath/io.hpp"

namespace airpath {

/// One (controller mode, seed) simulation of a comparison.
struct CompareCell {
  FfMode mode = FfMode::kNone;
  std::uint64_t seed = 1;
  bool ok = false;
  std::string error;
  Metrics metrics;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

/// Seed-averaged metrics of one controller mode.
struct CompareRow {
  FfMode mode = FfMode::kNone;
  std::size_t cells_ok = 0;
  std::size_t cells_failed = 0;
  Metrics mean;
  /// Percent reduction of the mean absolute errors against the FB-only row
  /// (positive = better); empty without a usable baseline.
  std::optional<double> reduction_p_im;
  std::optional<double> reduction_chi_egr;
};

struct CompareResult {
  std::vector<CompareCell> cells;  // mode-major, seeds in order
  std::vector<CompareRow> rows;    // one per requested mode
};

struct CompareOptions {
  std::vector<FfMode> modes{FfMode::kNone, FfMode::kLookupTable, FfMode::kMpc};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  unsigned jobs = 1;
  /// When set, each cell writes trace.csv and metrics.json under
  /// <cell_dir>/<mode>_seed<k>/.
  std::optional<std::filesystem::path> cell_dir;
};

/// Runs the mode x seed product. Cell failures are captured per cell.
CompareResult run_comparison(const RunConfig& config, const ModelGrid& grid,
                             const std::vector<PenaltyGrid>& penalties, const CompareOptions& options,
                             const std::function<void(const CompareCell&)>& on_cell = {});

/// Aggregates finished cells into rows (means over successful seeds).
std::vector<CompareRow> aggregate_cells(const std::vector<CompareCell>& cells, const std::vector<FfMode>& modes);

/// Human-readable controller label ("FB only", "LUT FF + FB", "FF MPC + FB").
const char* scheme_label(FfMode mode);

/// Aligned text table with "(↓ x.x%)" deltas against the FB-only row.
std::string comparison_table_text(const CompareResult& result);
std::string comparison_to_json(const CompareResult& result);

/// Parses "none,lut,mpc"; throws ConfigError naming an unknown token.
std::vector<FfMode> parse_mode_list(const std::string& text);
/// Parses "1..5", "3" or "1,4,9".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace airpath
