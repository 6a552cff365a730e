#pragma once

// Deterministic fixed-route trace generator. Every trip replays the same
// position-indexed plans, so traces carry the cross-trip regularity that the
// recurrent predictors are meant to exploit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bwpredict/trace.hpp"

namespace bwp {

struct Knot {
  double position = 0;  // seconds from trip start
  double value = 0;
};

struct BandSegment {
  double start = 0;
  std::string label;
  double multiplier = 1.0;
};

struct CellSegment {
  double start = 0;
  std::string id;
};

struct ModeSegment {
  double start = 0;
  int mode = 0;
};

struct RouteProfile {
  std::string route_id = "synthetic";
  std::string schema = "lte8";
  std::int64_t route_length = 600;  // seconds per trip
  int trip_count = 8;
  std::vector<Knot> base_curve;     // Mbps
  std::vector<BandSegment> band_plan;
  std::vector<CellSegment> cell_plan;
  std::vector<ModeSegment> mode_plan;
  std::vector<Knot> speed_profile;  // m/s
  double noise_std = 2.0;           // Mbps, on the target column
  double handoff_dip = 0.6;         // bandwidth multiplier in the second of a cell change
  double nr_multiplier = 4.0;       // DL multiplier while in 5G
  std::uint64_t seed = 0;

  void validate() const {
    require(route_length >= 60, ErrorKind::config, "route length must be >= 60 s");
    require(trip_count >= 1, ErrorKind::config, "trip count must be >= 1");
    require(noise_std >= 0.0, ErrorKind::config, "noise std must be >= 0");
    require(!base_curve.empty(), ErrorKind::config, "base curve needs at least one knot");
    require(handoff_dip >= 0.0 && nr_multiplier >= 0.0, ErrorKind::config, "multipliers must be >= 0");
    auto sorted = [](const auto& v) {
      return std::is_sorted(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    };
    require(sorted(band_plan) && sorted(cell_plan) && sorted(mode_plan), ErrorKind::config,
            "plan segments must be sorted by start position");
    for (const auto& k : base_curve) require(k.value >= 0.0, ErrorKind::config, "base curve must be >= 0");
  }
};

namespace detail {

inline double interpolate(const std::vector<Knot>& knots, double x, double fallback) {
  if (knots.empty()) return fallback;
  if (x <= knots.front().position) return knots.front().value;
  if (x >= knots.back().position) return knots.back().value;
  auto hi = std::upper_bound(knots.begin(), knots.end(), x,
                             [](double v, const Knot& k) { return v < k.position; });
  auto lo = hi - 1;
  const double span = hi->position - lo->position;
  if (span <= 0) return hi->value;
  return lo->value + (hi->value - lo->value) * (x - lo->position) / span;
}

// Index of the segment covering position x (segments start at .start).
template <typename Segment>
std::size_t segment_at(const std::vector<Segment>& plan, double x) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < plan.size(); ++i)
    if (plan[i].start <= x) idx = i;
  return idx;
}

}  // namespace detail

inline RouteProfile default_lte_profile() {
  RouteProfile p;
  p.route_id = "synthetic-lte";
  p.schema = "lte8";
  p.route_length = 600;
  p.trip_count = 8;
  p.base_curve = {{0, 18},   {40, 30},  {80, 12},  {120, 8},  {160, 25}, {200, 35}, {240, 20}, {280, 7},
                  {320, 15}, {360, 28}, {400, 32}, {440, 14}, {480, 9},  {520, 22}, {560, 26}, {599, 18}};
  p.band_plan = {{0, "B2", 1.0}, {150, "B13", 0.6}, {260, "B4", 1.2}, {420, "B13", 0.6}, {500, "B2", 1.0}};
  p.cell_plan = {{0, "c1"},   {70, "c2"},  {140, "c3"}, {215, "c4"},
                 {290, "c5"}, {370, "c6"}, {450, "c7"}, {530, "c8"}};
  p.speed_profile = {{0, 4}, {100, 12}, {200, 3}, {300, 10}, {400, 14}, {500, 6}, {599, 4}};
  p.noise_std = 2.0;
  p.seed = 0;
  return p;
}

// 480 s route with four access-mode switches per trip and matching start/end
// modes, so ten trips give exactly 40 switches.
inline RouteProfile default_5g_profile() {
  RouteProfile p;
  p.route_id = "synthetic-5g";
  p.schema = "5g12";
  p.route_length = 480;
  p.trip_count = 10;
  p.base_curve = {{0, 14}, {60, 20}, {120, 9}, {180, 16}, {240, 22}, {300, 11}, {360, 15}, {420, 19}, {479, 14}};
  p.cell_plan = {{0, "n1"}, {90, "n2"}, {170, "n3"}, {260, "n4"}, {350, "n5"}, {430, "n6"}};
  p.mode_plan = {{0, 1}, {100, 0}, {200, 1}, {330, 0}, {420, 1}};
  p.speed_profile = {{0, 30}, {120, 55}, {240, 40}, {360, 60}, {479, 30}};
  p.noise_std = 2.0;
  p.seed = 0;
  return p;
}

// Position-dependent, noise-free bandwidth component: base curve times band
// multiplier, dipped at cell changes and scaled in 5G segments when the
// schema has an access mode. Each trip starts afresh, so the wrap from the
// last cell to the first is not a handoff.
inline std::vector<double> clean_bandwidth(const RouteProfile& profile, bool five_g) {
  const auto L = static_cast<std::size_t>(profile.route_length);
  const std::size_t total = L * static_cast<std::size_t>(profile.trip_count);
  std::vector<double> out(total);
  std::size_t prev_cell = 0;
  for (std::size_t t = 0; t < total; ++t) {
    const double pos = static_cast<double>(t % L);
    double v = detail::interpolate(profile.base_curve, pos, 0.0);
    if (!profile.band_plan.empty()) v *= profile.band_plan[detail::segment_at(profile.band_plan, pos)].multiplier;
    if (!profile.cell_plan.empty()) {
      const std::size_t cell = detail::segment_at(profile.cell_plan, pos);
      if (t % L != 0 && cell != prev_cell) v *= profile.handoff_dip;
      prev_cell = cell;
    }
    if (five_g && !profile.mode_plan.empty() && profile.mode_plan[detail::segment_at(profile.mode_plan, pos)].mode == 1)
      v *= profile.nr_multiplier;
    out[t] = v;
  }
  return out;
}

inline Trace generate(const RouteProfile& profile, const FeatureSchema& schema) {
  profile.validate();
  const bool lte = schema == FeatureSchema::lte8();
  const bool nr = schema == FeatureSchema::nr5g12();
  require(lte || nr, ErrorKind::config, "synthetic generation supports the lte8 and 5g12 schemas only");

  const auto L = static_cast<std::size_t>(profile.route_length);
  const std::size_t total = L * static_cast<std::size_t>(profile.trip_count);
  const std::vector<double> clean = clean_bandwidth(profile, nr);

  double base_max = 0;
  for (const auto& k : profile.base_curve) base_max = std::max(base_max, k.value);
  if (base_max <= 0) base_max = 1;

  std::vector<std::size_t> cells(total, 0);
  std::vector<int> modes(total, 0);
  for (std::size_t t = 0; t < total; ++t) {
    const double pos = static_cast<double>(t % L);
    if (!profile.cell_plan.empty()) cells[t] = detail::segment_at(profile.cell_plan, pos);
    if (!profile.mode_plan.empty()) modes[t] = profile.mode_plan[detail::segment_at(profile.mode_plan, pos)].mode;
  }
  // Seconds until the access mode next differs from the current one.
  std::vector<double> to_switch(total, 1e9);
  for (std::size_t t = total; t-- > 0;) {
    if (t + 1 < total) to_switch[t] = modes[t + 1] != modes[t] ? 1.0 : to_switch[t + 1] + 1.0;
  }

  std::mt19937_64 rng(profile.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto noise = [&](double sd) { return sd * gauss(rng); };

  CodeMaps maps;
  if (lte) {
    std::vector<std::string> bands;
    for (const auto& b : profile.band_plan) {
      if (std::find(bands.begin(), bands.end(), b.label) == bands.end()) bands.push_back(b.label);
    }
    if (bands.empty()) bands.push_back("B0");
    maps["Band"] = bands;
  } else {
    maps["NetworkMode"] = {"LTE", "5G"};
    auto& ids = maps["CellID"];
    for (const auto& c : profile.cell_plan) ids.push_back(c.id);
    if (ids.empty()) ids.push_back("cell0");
  }

  std::vector<Sample> samples;
  samples.reserve(total);
  for (std::size_t t = 0; t < total; ++t) {
    const double pos = static_cast<double>(t % L);
    const double base = detail::interpolate(profile.base_curve, pos, 0.0);
    const double q = base / base_max;
    const double speed = detail::interpolate(profile.speed_profile, pos, 10.0);
    const bool cell_change = t % L != 0 && cells[t] != cells[t - 1];
    Sample s;
    s.t = static_cast<std::int64_t>(t);
    if (lte) {
      std::size_t band_code = 0;
      if (!profile.band_plan.empty()) {
        const auto& label = profile.band_plan[detail::segment_at(profile.band_plan, pos)].label;
        const auto& bands = maps["Band"];
        band_code = static_cast<std::size_t>(std::find(bands.begin(), bands.end(), label) - bands.begin());
      }
      double ta = 1.0;
      if (!profile.cell_plan.empty()) {
        const std::size_t c = cells[t];
        const double start = profile.cell_plan[c].start;
        const double end = c + 1 < profile.cell_plan.size() ? profile.cell_plan[c + 1].start
                                                             : static_cast<double>(profile.route_length);
        ta = std::round(1.0 + 10.0 * std::abs(pos - 0.5 * (start + end)) / std::max(1.0, end - start));
      }
      const double bw = std::max(0.0, clean[t] + noise(profile.noise_std));
      const double neighbors = std::max(0.0, std::round(2.0 + 4.0 * (1.0 - q) + noise(0.5)));
      const double rssi = -105.0 + 40.0 * q + noise(0.4);
      const double rsrq = -19.0 + 12.0 * q + noise(0.3);
      const double spd = std::max(0.0, speed + noise(0.3));
      s.values = {bw, neighbors, rssi, rsrq, cell_change ? 1.0 : 0.0, ta, spd, static_cast<double>(band_code)};
    } else {
      const int m = modes[t];
      const double approach = std::clamp(1.0 - (to_switch[t] - 1.0) / 3.0, 0.0, 1.0);
      const double dl = std::max(0.0, clean[t] + noise(profile.noise_std));
      const double ul = std::max(0.0, 0.15 * clean[t] + noise(0.15 * profile.noise_std));
      const double rssi = -100.0 + 35.0 * q + noise(0.5);
      const double rsrq = -18.0 + 10.0 * q + noise(0.3);
      const double rsrp = -120.0 + 40.0 * q + noise(0.5);
      // NR signal drifts toward a common threshold in the three seconds before
      // a switch: down from the 5G side (release), up from the LTE side (add).
      // SNR fades only before 5G->LTE, NR quality rises only before LTE->5G.
      double snr = 0, nrsrp = 0, nrsrq = 0;
      if (m == 1) {
        snr = 24.0 - 18.0 * approach + noise(1.0);
        nrsrp = -85.0 - 15.0 * approach + noise(1.0);
        nrsrq = -15.0 + noise(0.5);
      } else {
        snr = 14.0 + noise(1.0);
        nrsrp = -115.0 + 15.0 * approach + noise(1.0);
        nrsrq = -15.0 + 6.0 * approach + noise(0.5);
      }
      const double cqi = std::clamp(std::round(snr / 2.0), 0.0, 15.0);
      const double spd = std::max(0.0, speed + noise(1.0));
      s.values = {dl,  ul,  rssi, rsrq, rsrp, nrsrp, nrsrq, snr, cqi, static_cast<double>(m), cell_change ? 1.0 : 0.0,
                  spd, static_cast<double>(cells[t])};
      s.mode = m;
    }
    samples.push_back(std::move(s));
  }
  return Trace(schema, std::move(samples), profile.route_id, 1, std::move(maps));
}

inline Trace generate(const RouteProfile& profile) { return generate(profile, FeatureSchema::by_name(profile.schema)); }

inline Json profile_to_json(const RouteProfile& p) {
  Json j = header("bwpredict-profile");
  auto knots = [](const std::vector<Knot>& v) {
    Json a = Json::array();
    for (const auto& k : v) a.push_back({k.position, k.value});
    return a;
  };
  j["route_id"] = p.route_id;
  j["schema"] = p.schema;
  j["route_length"] = p.route_length;
  j["trip_count"] = p.trip_count;
  j["base_curve"] = knots(p.base_curve);
  Json bands = Json::array();
  for (const auto& b : p.band_plan) bands.push_back({{"start", b.start}, {"label", b.label}, {"multiplier", b.multiplier}});
  j["band_plan"] = bands;
  Json cells = Json::array();
  for (const auto& c : p.cell_plan) cells.push_back({{"start", c.start}, {"id", c.id}});
  j["cell_plan"] = cells;
  Json modes = Json::array();
  for (const auto& m : p.mode_plan) modes.push_back({{"start", m.start}, {"mode", m.mode}});
  j["mode_plan"] = modes;
  j["speed_profile"] = knots(p.speed_profile);
  j["noise_std"] = p.noise_std;
  j["handoff_dip"] = p.handoff_dip;
  j["nr_multiplier"] = p.nr_multiplier;
  j["seed"] = p.seed;
  return j;
}

inline RouteProfile profile_from_json(const Json& j) {
  check_header(j, "bwpredict-profile");
  RouteProfile p;
  auto knots = [](const Json& a) {
    std::vector<Knot> v;
    for (const auto& k : a) v.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
    return v;
  };
  p.route_id = j.value("route_id", p.route_id);
  p.schema = j.value("schema", p.schema);
  p.route_length = j.value("route_length", p.route_length);
  p.trip_count = j.value("trip_count", p.trip_count);
  if (j.contains("base_curve")) p.base_curve = knots(j.at("base_curve"));
  if (j.contains("band_plan"))
    for (const auto& b : j.at("band_plan"))
      p.band_plan.push_back({b.at("start").get<double>(), b.at("label").get<std::string>(), b.value("multiplier", 1.0)});
  if (j.contains("cell_plan"))
    for (const auto& c : j.at("cell_plan")) p.cell_plan.push_back({c.at("start").get<double>(), c.at("id").get<std::string>()});
  if (j.contains("mode_plan"))
    for (const auto& m : j.at("mode_plan")) p.mode_plan.push_back({m.at("start").get<double>(), m.at("mode").get<int>()});
  if (j.contains("speed_profile")) p.speed_profile = knots(j.at("speed_profile"));
  p.noise_std = j.value("noise_std", p.noise_std);
  p.handoff_dip = j.value("handoff_dip", p.handoff_dip);
  p.nr_multiplier = j.value("nr_multiplier", p.nr_multiplier);
  p.seed = j.value("seed", p.seed);
  p.validate();
  return p;
}

}  // namespace bwp
