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

#include "airpath/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace airpath {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Cursor into a JSON document that remembers its path for error messages.
class Field {
 public:
  Field(const json& value, std::string path) : value_(&value), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return *value_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError((path_.empty() ? std::string("/") : path_) + ": " + what);
  }

  bool has(const std::string& key) const { return value_->is_object() && value_->contains(key); }

  Field at(const std::string& key) const {
    if (!value_->is_object()) fail("expected an object");
    auto it = value_->find(key);
    if (it == value_->end()) Field(*value_, path_ + "/" + key).fail("missing required field");
    return Field(*it, path_ + "/" + key);
  }

  std::optional<Field> opt(const std::string& key) const {
    if (!value_->is_object()) fail("expected an object");
    auto it = value_->find(key);
    if (it == value_->end() || it->is_null()) return std::nullopt;
    return Field(*it, path_ + "/" + key);
  }

  Field index(std::size_t i) const { return Field((*value_)[i], path_ + "/" + std::to_string(i)); }

  std::size_t size() const {
    if (!value_->is_array()) fail("expected an array");
    return value_->size();
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!value_->is_object()) fail("expected an object");
    for (auto it = value_->begin(); it != value_->end(); ++it) {
      const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; });
      if (!known) Field(*it, path_ + "/" + it.key()).fail("unknown field");
    }
  }

  double number() const {
    if (!value_->is_number()) fail("expected a number");
    const double v = value_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  // Finite number or null (meaning unbounded).
  double bound(double if_null) const { return value_->is_null() ? if_null : number(); }
  std::int64_t integer() const {
    if (!value_->is_number_integer()) fail("expected an integer");
    return value_->get<std::int64_t>();
  }
  std::uint64_t unsigned_integer() const {
    const std::int64_t v = integer();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }
  bool boolean() const {
    if (!value_->is_boolean()) fail("expected a boolean");
    return value_->get<bool>();
  }
  std::string string() const {
    if (!value_->is_string()) fail("expected a string");
    return value_->get<std::string>();
  }
  std::vector<double> numbers() const {
    const std::size_t n = size();
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(index(i).number());
    return out;
  }
  Vec2 vec2() const {
    const auto v = numbers();
    if (v.size() != 2) fail("expected 2 numbers");
    return {v[0], v[1]};
  }
  /// Pair of bounds; null entries become `if_null`.
  Vec2 bound_vec2(double if_null) const {
    if (size() != 2) fail("expected 2 numbers or nulls");
    return {index(0).bound(if_null), index(1).bound(if_null)};
  }
  /// Row-major 2x2 given as 4 numbers or as nested rows.
  Mat2 mat2() const {
    if (size() == 2 && value_->at(0).is_array()) {
      Mat2 m;
      for (int r = 0; r < 2; ++r) m.row(r) = index(static_cast<std::size_t>(r)).vec2().transpose();
      return m;
    }
    const auto v = numbers();
    if (v.size() != 4) fail("expected a 2x2 matrix (4 numbers, row-major)");
    Mat2 m;
    m << v[0], v[1], v[2], v[3];
    return m;
  }

 private:
  const json* value_;
  std::string path_;
};

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

template <typename Derived>
json to_array(const Eigen::MatrixBase<Derived>& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

template <int R, int C>
Eigen::Matrix<double, R, C> from_array(const Field& f) {
  const auto v = f.numbers();
  if (v.size() != static_cast<std::size_t>(R * C)) {
    f.fail("expected " + std::to_string(R * C) + " numbers (row-major)");
  }
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) m(r, c) = v[static_cast<std::size_t>(r * C + c)];
  }
  return m;
}

json interval_json(const Interval& iv) {
  json a = json::array();
  a.push_back(std::isfinite(iv.lo) ? json(iv.lo) : json(nullptr));
  a.push_back(std::isfinite(iv.hi) ? json(iv.hi) : json(nullptr));
  return a;
}

Interval parse_interval(const Field& f) {
  if (f.size() != 2) f.fail("expected [lo, hi] (null for unbounded)");
  const double inf = std::numeric_limits<double>::infinity();
  Interval iv{f.index(0).bound(-inf), f.index(1).bound(inf)};
  if (!(iv.lo < iv.hi)) f.fail("interval must satisfy lo < hi");
  return iv;
}

// ---- plant ---------------------------------------------------------------

json plant_json(const PlantParams& p) {
  return {
      {"p_amb", p.p_amb},
      {"c_c", p.c_c},
      {"c_e", p.c_e},
      {"k_b", p.k_b},
      {"tau_p0", p.tau_p0},
      {"tau_p1", p.tau_p1},
      {"tau_chi0", p.tau_chi0},
      {"tau_chi1", p.tau_chi1},
      {"kappa", p.kappa},
      {"max_substep", p.max_substep},
      {"speed_range", {p.speed_lo, p.speed_hi}},
      {"fuel_range", {p.fuel_lo, p.fuel_hi}},
      {"c_c_scale", p.c_c_scale},
      {"c_e_scale", p.c_e_scale},
      {"k_b_scale", p.k_b_scale},
      {"calibration",
       {{"base", to_array(p.calibration.base)},
        {"per_speed", to_array(p.calibration.per_speed)},
        {"per_fuel", to_array(p.calibration.per_fuel)}}},
  };
}

PlantParams parse_plant(const Field& f) {
  f.allow({"p_amb", "c_c", "c_e", "k_b", "tau_p0", "tau_p1", "tau_chi0", "tau_chi1", "kappa",
           "max_substep", "speed_range", "fuel_range", "c_c_scale", "c_e_scale", "k_b_scale",
           "calibration"});
  PlantParams p;
  auto num = [&](const char* key, double& dst) {
    if (auto v = f.opt(key)) dst = v->number();
  };
  num("p_amb", p.p_amb);
  num("c_c", p.c_c);
  num("c_e", p.c_e);
  num("k_b", p.k_b);
  num("tau_p0", p.tau_p0);
  num("tau_p1", p.tau_p1);
  num("tau_chi0", p.tau_chi0);
  num("tau_chi1", p.tau_chi1);
  num("kappa", p.kappa);
  num("max_substep", p.max_substep);
  num("c_c_scale", p.c_c_scale);
  num("c_e_scale", p.c_e_scale);
  num("k_b_scale", p.k_b_scale);
  if (auto v = f.opt("speed_range")) {
    const Vec2 r = v->vec2();
    p.speed_lo = r(0);
    p.speed_hi = r(1);
  }
  if (auto v = f.opt("fuel_range")) {
    const Vec2 r = v->vec2();
    p.fuel_lo = r(0);
    p.fuel_hi = r(1);
  }
  if (auto cal = f.opt("calibration")) {
    cal->allow({"base", "per_speed", "per_fuel"});
    if (auto v = cal->opt("base")) p.calibration.base = v->vec2();
    if (auto v = cal->opt("per_speed")) p.calibration.per_speed = v->vec2();
    if (auto v = cal->opt("per_fuel")) p.calibration.per_fuel = v->vec2();
  }
  try {
    p.validate();
  } catch (const ConfigError& e) {
    f.fail(e.what());
  }
  return p;
}

// ---- controllers ---------------------------------------------------------

json dare_json(const DareSettings& d) {
  return {{"tolerance", d.tolerance},
          {"max_iterations", d.max_iterations},
          {"method", d.method == DareMethod::kDoubling ? "doubling" : "value_iteration"}};
}

DareSettings parse_dare(const Field& f) {
  f.allow({"tolerance", "max_iterations", "method"});
  DareSettings d;
  if (auto v = f.opt("tolerance")) {
    d.tolerance = v->number();
    if (!(d.tolerance > 0.0)) v->fail("must be positive");
  }
  if (auto v = f.opt("max_iterations")) {
    d.max_iterations = static_cast<int>(v->integer());
    if (d.max_iterations < 1) v->fail("must be at least 1");
  }
  if (auto v = f.opt("method")) {
    const std::string m = v->string();
    if (m == "doubling") d.method = DareMethod::kDoubling;
    else if (m == "value_iteration") d.method = DareMethod::kValueIteration;
    else v->fail("expected \"doubling\" or \"value_iteration\"");
  }
  return d;
}

json fb_json(const FbMpcConfig& c) {
  json regions = json::array();
  for (const Region& r : c.regions.regions()) {
    regions.push_back({{"name", r.name},
                       {"speed", interval_json(r.speed)},
                       {"fuel", interval_json(r.fuel)},
                       {"chi_egr", interval_json(r.chi_egr)},
                       {"Q_e", to_array(r.weights.Q_e)},
                       {"R_ext", to_array(r.weights.R_ext)}});
  }
  return {
      {"horizon", c.horizon},
      {"sample_period", c.sample_period},
      {"slack_weight", c.slack_weight},
      {"x_min", to_array(c.x_min)},
      {"x_max", to_array(c.x_max)},
      {"u_min", to_array(c.u_min)},
      {"u_max", to_array(c.u_max)},
      {"penalty_source", c.penalty_source == PenaltySource::kOnlineDare ? "online_dare" : "interpolated_grid"},
      {"tighten_for_feedforward", c.tighten_for_feedforward},
      {"hessian_regularization", c.hessian_regularization},
      {"qp", {{"tolerance", c.qp.tolerance}, {"max_iterations", c.qp.max_iterations}}},
      {"dare", dare_json(c.dare)},
      {"regions", regions},
  };
}

FbMpcConfig parse_fb(const Field& f) {
  f.allow({"horizon", "sample_period", "slack_weight", "x_min", "x_max", "u_min", "u_max",
           "penalty_source", "tighten_for_feedforward", "hessian_regularization", "qp", "dare",
           "Q_e", "R_ext", "regions"});
  FbMpcConfig c;
  if (auto v = f.opt("horizon")) c.horizon = static_cast<int>(v->integer());
  if (auto v = f.opt("sample_period")) c.sample_period = v->number();
  if (auto v = f.opt("slack_weight")) c.slack_weight = v->number();
  if (auto v = f.opt("x_min")) c.x_min = v->bound_vec2(-kInf);
  if (auto v = f.opt("x_max")) c.x_max = v->bound_vec2(kInf);
  if (auto v = f.opt("u_min")) c.u_min = v->bound_vec2(-kInf);
  if (auto v = f.opt("u_max")) c.u_max = v->bound_vec2(kInf);
  if (auto v = f.opt("hessian_regularization")) c.hessian_regularization = v->number();
  if (auto v = f.opt("tighten_for_feedforward")) c.tighten_for_feedforward = v->boolean();
  if (auto v = f.opt("penalty_source")) {
    const std::string s = v->string();
    if (s == "interpolated_grid") c.penalty_source = PenaltySource::kInterpolatedGrid;
    else if (s == "online_dare") c.penalty_source = PenaltySource::kOnlineDare;
    else v->fail("expected \"interpolated_grid\" or \"online_dare\"");
  }
  if (auto q = f.opt("qp")) {
    q->allow({"tolerance", "max_iterations"});
    if (auto v = q->opt("tolerance")) c.qp.tolerance = v->number();
    if (auto v = q->opt("max_iterations")) c.qp.max_iterations = static_cast<int>(v->integer());
  }
  if (auto v = f.opt("dare")) c.dare = parse_dare(*v);
  TrackingWeights w = default_tracking_weights();
  if (auto v = f.opt("Q_e")) w.Q_e = v->mat2();
  if (auto v = f.opt("R_ext")) w.R_ext = v->mat2();
  try {
    if (auto regions = f.opt("regions")) {
      std::vector<Region> list;
      for (std::size_t i = 0; i < regions->size(); ++i) {
        const Field r = regions->index(i);
        r.allow({"name", "speed", "fuel", "chi_egr", "Q_e", "R_ext"});
        Region reg;
        reg.name = r.has("name") ? r.at("name").string() : "region " + std::to_string(i + 1);
        if (auto v = r.opt("speed")) reg.speed = parse_interval(*v);
        if (auto v = r.opt("fuel")) reg.fuel = parse_interval(*v);
        if (auto v = r.opt("chi_egr")) reg.chi_egr = parse_interval(*v);
        reg.weights = w;
        if (auto v = r.opt("Q_e")) reg.weights.Q_e = v->mat2();
        if (auto v = r.opt("R_ext")) reg.weights.R_ext = v->mat2();
        list.push_back(std::move(reg));
      }
      c.regions = RegionTable(std::move(list));
    } else {
      c.regions = default_region_table(w);
    }
    c.validate();
  } catch (const ConfigError& e) {
    f.fail(e.what());
  }
  return c;
}

json ff_json(const FfMpcConfig& c) {
  return {
      {"horizon", c.horizon},
      {"Q_ff", to_array(c.Q_ff)},
      {"R_ff", to_array(c.R_ff)},
      {"x_min", to_array(c.x_min)},
      {"x_max", to_array(c.x_max)},
      {"u_min", to_array(c.u_min)},
      {"u_max", to_array(c.u_max)},
      {"input_reference",
       c.input_reference == FfMpcConfig::InputReference::kTargetInput ? "target_input" : "steady_state"},
      {"model_input", c.model_input == FfModelInput::kApplied ? "applied" : "feedforward"},
      {"hessian_regularization", c.hessian_regularization},
      {"qp", {{"tolerance", c.qp.tolerance}, {"max_iterations", c.qp.max_iterations}}},
      {"dare", dare_json(c.dare)},
  };
}

FfMpcConfig parse_ff(const Field& f, const FbMpcConfig& fb) {
  f.allow({"horizon", "Q_ff", "R_ff", "x_min", "x_max", "u_min", "u_max", "input_reference",
           "model_input", "hessian_regularization", "qp", "dare"});
  FfMpcConfig c;
  c.horizon = fb.horizon;
  c.x_min = fb.x_min;
  c.x_max = fb.x_max;
  c.u_min = fb.u_min;
  c.u_max = fb.u_max;
  if (auto v = f.opt("horizon")) c.horizon = static_cast<int>(v->integer());
  if (auto v = f.opt("Q_ff")) c.Q_ff = v->mat2();
  if (auto v = f.opt("R_ff")) c.R_ff = v->mat2();
  if (auto v = f.opt("x_min")) c.x_min = v->bound_vec2(-kInf);
  if (auto v = f.opt("x_max")) c.x_max = v->bound_vec2(kInf);
  if (auto v = f.opt("u_min")) c.u_min = v->bound_vec2(-kInf);
  if (auto v = f.opt("u_max")) c.u_max = v->bound_vec2(kInf);
  if (auto v = f.opt("hessian_regularization")) c.hessian_regularization = v->number();
  if (auto v = f.opt("dare")) c.dare = parse_dare(*v);
  if (auto v = f.opt("input_reference")) {
    const std::string s = v->string();
    if (s == "target_input") c.input_reference = FfMpcConfig::InputReference::kTargetInput;
    else if (s == "steady_state") c.input_reference = FfMpcConfig::InputReference::kSteadyState;
    else v->fail("expected \"target_input\" or \"steady_state\"");
  }
  if (auto v = f.opt("model_input")) {
    const std::string s = v->string();
    if (s == "applied") c.model_input = FfModelInput::kApplied;
    else if (s == "feedforward") c.model_input = FfModelInput::kFeedforward;
    else v->fail("expected \"applied\" or \"feedforward\"");
  }
  if (auto q = f.opt("qp")) {
    q->allow({"tolerance", "max_iterations"});
    if (auto v = q->opt("tolerance")) c.qp.tolerance = v->number();
    if (auto v = q->opt("max_iterations")) c.qp.max_iterations = static_cast<int>(v->integer());
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    f.fail(e.what());
  }
  return c;
}

// ---- scenario ------------------------------------------------------------

json segment_json(const ScenarioSegment& s) {
  if (!s.kind) return {{"file", s.file.string()}};
  const ScenarioParams& p = s.params;
  return {
      {"kind", to_string(*s.kind)},
      {"sample_period", p.sample_period},
      {"duration", p.duration},
      {"speed_range", {p.speed_min, p.speed_max}},
      {"fuel_range", {p.fuel_min, p.fuel_max}},
      {"speed", p.speed},
      {"fuel_low", p.fuel_low},
      {"fuel_high", p.fuel_high},
      {"step_time", p.step_time},
      {"step_back_time", p.step_back_time},
      {"ramp_fuel", p.ramp_fuel},
      {"speed_low", p.speed_low},
      {"speed_high", p.speed_high},
      {"ramp_start", p.ramp_start},
      {"ramp_duration", p.ramp_duration},
      {"ramp_hold", p.ramp_hold},
      {"target_offset", to_array(p.target_offset)},
      {"cycle_duration", p.cycle_duration},
      {"idle_probability", p.idle_probability},
  };
}

ScenarioSegment parse_segment(const Field& f, const std::filesystem::path& base_dir) {
  ScenarioSegment seg;
  if (f.has("file")) {
    f.allow({"file"});
    std::filesystem::path p = f.at("file").string();
    seg.file = p.is_absolute() ? p : base_dir / p;
    return seg;
  }
  f.allow({"kind", "sample_period", "duration", "speed_range", "fuel_range", "speed", "fuel_low",
           "fuel_high", "step_time", "step_back_time", "ramp_fuel", "speed_low", "speed_high",
           "ramp_start", "ramp_duration", "ramp_hold", "target_offset", "cycle_duration",
           "idle_probability"});
  const Field kind = f.at("kind");
  try {
    seg.kind = parse_scenario_kind(kind.string());
  } catch (const ConfigError& e) {
    kind.fail(e.what());
  }
  ScenarioParams& p = seg.params;
  auto num = [&](const char* key, double& dst) {
    if (auto v = f.opt(key)) dst = v->number();
  };
  num("sample_period", p.sample_period);
  num("duration", p.duration);
  num("speed", p.speed);
  num("fuel_low", p.fuel_low);
  num("fuel_high", p.fuel_high);
  num("step_time", p.step_time);
  num("step_back_time", p.step_back_time);
  num("ramp_fuel", p.ramp_fuel);
  num("speed_low", p.speed_low);
  num("speed_high", p.speed_high);
  num("ramp_start", p.ramp_start);
  num("ramp_duration", p.ramp_duration);
  num("ramp_hold", p.ramp_hold);
  num("cycle_duration", p.cycle_duration);
  num("idle_probability", p.idle_probability);
  if (auto v = f.opt("speed_range")) {
    const Vec2 r = v->vec2();
    p.speed_min = r(0);
    p.speed_max = r(1);
  }
  if (auto v = f.opt("fuel_range")) {
    const Vec2 r = v->vec2();
    p.fuel_min = r(0);
    p.fuel_max = r(1);
  }
  if (auto v = f.opt("target_offset")) p.target_offset = v->vec2();
  return seg;
}

}  // namespace

// ---- grid file -----------------------------------------------------------

std::string grid_to_json(const ModelGrid& grid, const std::vector<PenaltyGrid>& penalties) {
  json j;
  j["speed_breakpoints"] = grid.mesh().speed();
  j["fuel_breakpoints"] = grid.mesh().fuel();
  json nodes = json::array();
  for (const LocalModel& m : grid.nodes()) {
    nodes.push_back({{"A", to_array(m.A)},
                     {"B", to_array(m.B)},
                     {"Bf", to_array(m.Bf)},
                     {"x_ss", to_array(m.x_ss)},
                     {"u_ss", to_array(m.u_ss)},
                     {"w_inj_ss", m.w_inj_ss}});
  }
  j["nodes"] = std::move(nodes);
  if (!penalties.empty()) {
    json list = json::array();
    for (const PenaltyGrid& pg : penalties) {
      json p = json::array();
      for (const TerminalPenalty& tp : pg.nodes()) p.push_back(to_array(tp.reduced));
      list.push_back({{"Q_e", to_array(pg.weights().Q_e)}, {"R_ext", to_array(pg.weights().R_ext)}, {"P", p}});
    }
    j["terminal_penalties"] = std::move(list);
  }
  return j.dump(1);
}

GridFile grid_from_json(const std::string& text) {
  const json doc = parse_json(text, "model grid");
  const Field root(doc, "");
  root.allow({"speed_breakpoints", "fuel_breakpoints", "nodes", "terminal_penalties"});
  Mesh mesh;
  try {
    mesh = Mesh(root.at("speed_breakpoints").numbers(), root.at("fuel_breakpoints").numbers());
  } catch (const ConfigError& e) {
    if (std::string(e.what()).front() == '/') throw;
    root.fail(e.what());
  }
  const Field nodes = root.at("nodes");
  if (nodes.size() != mesh.size()) {
    nodes.fail("expected " + std::to_string(mesh.size()) + " nodes, got " + std::to_string(nodes.size()));
  }
  std::vector<LocalModel> models;
  models.reserve(mesh.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Field n = nodes.index(k);
    n.allow({"A", "B", "Bf", "x_ss", "u_ss", "w_inj_ss"});
    LocalModel m;
    m.A = from_array<2, 2>(n.at("A"));
    m.B = from_array<2, 2>(n.at("B"));
    m.Bf = from_array<2, 1>(n.at("Bf"));
    m.x_ss = from_array<2, 1>(n.at("x_ss"));
    m.u_ss = from_array<2, 1>(n.at("u_ss"));
    m.w_inj_ss = n.at("w_inj_ss").number();
    models.push_back(m);
  }
  GridFile out{ModelGrid(mesh, std::move(models)), {}};
  if (auto tp = root.opt("terminal_penalties")) {
    for (std::size_t g = 0; g < tp->size(); ++g) {
      const Field entry = tp->index(g);
      entry.allow({"Q_e", "R_ext", "P"});
      TrackingWeights w{entry.at("Q_e").mat2(), entry.at("R_ext").mat2()};
      const Field ps = entry.at("P");
      if (ps.size() != mesh.size()) ps.fail("node count mismatch");
      std::vector<TerminalPenalty> pens;
      for (std::size_t k = 0; k < ps.size(); ++k) pens.push_back({from_array<4, 4>(ps.index(k))});
      out.penalties.emplace_back(mesh, w, std::move(pens));
    }
  }
  return out;
}

GridFile load_grid_file(const std::filesystem::path& path) {
  return grid_from_json(read_text_file(path));
}

// ---- run configuration ---------------------------------------------------

Scenario build_scenario(const ScenarioSpec& spec, std::uint64_t seed, const SetpointMap& map) {
  if (spec.segments.empty()) throw ConfigError("scenario: no segments");
  std::optional<Scenario> out;
  for (const ScenarioSegment& seg : spec.segments) {
    Scenario s;
    if (seg.kind) {
      s = make_scenario(*seg.kind, seg.params, seed, &map);
    } else {
      std::istringstream is(read_text_file(seg.file));
      s = read_scenario_csv(is, seg.file.stem().string());
    }
    if (out && out->targets.empty() != s.targets.empty()) {
      // Mixed sources: materialize map targets so segments can be joined.
      auto fill = [&map](Scenario& sc) {
        if (sc.targets.empty()) {
          for (const OperatingPoint& rho : sc.rho) sc.targets.push_back(map.at(rho));
        }
      };
      fill(*out);
      fill(s);
    }
    out = out ? concatenate(*out, s) : s;
  }
  return *out;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  const json doc = parse_json(text, "run configuration");
  const Field root(doc, "");
  root.allow({"plant", "grid", "identification", "fb_mpc", "ff_mpc", "ff_mode", "scenario", "seed",
              "egr_measurement_lag", "measurement_noise"});
  RunConfig rc;
  if (auto v = root.opt("plant")) rc.sim.plant = parse_plant(*v);
  if (auto v = root.opt("grid")) {
    std::filesystem::path p = v->string();
    rc.grid_path = p.is_absolute() ? p : base_dir / p;
  }
  if (auto id = root.opt("identification")) {
    id->allow({"mesh", "speed_range", "fuel_range", "actuator_amplitude", "fuel_amplitude", "duration", "seed"});
    if (auto v = id->opt("mesh")) {
      const Vec2 m = v->vec2();
      if (m(0) < 2 || m(1) < 2) v->fail("mesh needs at least 2x2 nodes");
      rc.identification.n_speed = static_cast<std::size_t>(m(0));
      rc.identification.n_fuel = static_cast<std::size_t>(m(1));
    }
    if (auto v = id->opt("speed_range")) {
      const Vec2 r = v->vec2();
      rc.identification.speed_lo = r(0);
      rc.identification.speed_hi = r(1);
    }
    if (auto v = id->opt("fuel_range")) {
      const Vec2 r = v->vec2();
      rc.identification.fuel_lo = r(0);
      rc.identification.fuel_hi = r(1);
    }
    if (auto v = id->opt("actuator_amplitude")) rc.identification.perturbation.actuator_amplitude = v->number();
    if (auto v = id->opt("fuel_amplitude")) rc.identification.perturbation.fuel_amplitude = v->number();
    if (auto v = id->opt("duration")) rc.identification.perturbation.duration = v->number();
    if (auto v = id->opt("seed")) rc.identification.perturbation.seed = v->unsigned_integer();
  }
  if (auto v = root.opt("fb_mpc")) rc.sim.fb = parse_fb(*v);
  {
    static const json empty = json::object();
    const auto ff = root.opt("ff_mpc");
    rc.sim.ff = parse_ff(ff ? *ff : Field(empty, "/ff_mpc"), rc.sim.fb);
  }
  if (auto v = root.opt("ff_mode")) {
    try {
      rc.sim.ff_mode = parse_ff_mode(v->string());
    } catch (const ConfigError& e) {
      v->fail(e.what());
    }
  }
  if (auto v = root.opt("seed")) rc.seed = v->unsigned_integer();
  if (auto v = root.opt("egr_measurement_lag")) rc.sim.egr_measurement_lag = v->number();
  if (auto v = root.opt("measurement_noise")) rc.sim.measurement_noise = v->vec2();

  const Field sc = root.at("scenario");
  if (sc.raw().is_array()) {
    for (std::size_t i = 0; i < sc.size(); ++i) rc.scenario.segments.push_back(parse_segment(sc.index(i), base_dir));
    if (rc.scenario.segments.empty()) sc.fail("expected at least one segment");
  } else {
    rc.scenario.segments.push_back(parse_segment(sc, base_dir));
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path), path.parent_path());
}

PlantParams parse_plant_params(const std::string& text) {
  const json doc = parse_json(text, "plant configuration");
  const Field root(doc, "");
  // Accept either a bare plant object or a run configuration holding one.
  if (root.has("plant")) return parse_plant(root.at("plant"));
  return parse_plant(root);
}

std::string plant_params_to_json(const PlantParams& params) { return plant_json(params).dump(2); }

std::string run_config_to_json(const RunConfig& rc) {
  json j;
  j["plant"] = plant_json(rc.sim.plant);
  if (rc.grid_path) j["grid"] = rc.grid_path->string();
  j["identification"] = {
      {"mesh", {rc.identification.n_speed, rc.identification.n_fuel}},
      {"speed_range", {rc.identification.speed_lo, rc.identification.speed_hi}},
      {"fuel_range", {rc.identification.fuel_lo, rc.identification.fuel_hi}},
      {"actuator_amplitude", rc.identification.perturbation.actuator_amplitude},
      {"fuel_amplitude", rc.identification.perturbation.fuel_amplitude},
      {"duration", rc.identification.perturbation.duration},
      {"seed", rc.identification.perturbation.seed},
  };
  j["fb_mpc"] = fb_json(rc.sim.fb);
  j["ff_mpc"] = ff_json(rc.sim.ff);
  j["ff_mode"] = to_string(rc.sim.ff_mode);
  json segs = json::array();
  for (const ScenarioSegment& s : rc.scenario.segments) segs.push_back(segment_json(s));
  j["scenario"] = segs;
  j["seed"] = rc.seed;
  j["egr_measurement_lag"] = rc.sim.egr_measurement_lag;
  j["measurement_noise"] = to_array(rc.sim.measurement_noise);
  return j.dump(2);
}

std::string metrics_to_json(const Metrics& m) {
  auto sig = [](const SignalMetrics& s) {
    return json{{"mean_abs_error", s.mean_abs_error},
                {"peak_abs_error", s.peak_abs_error},
                {"overshoot_pct", s.overshoot_pct},
                {"settling_time", s.settling_time}};
  };
  return json{{"p_im", sig(m.p_im)}, {"chi_egr", sig(m.chi_egr)}, {"step_events", m.step_events}}.dump(2);
}

// ---- files and digests ---------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace airpath
