#pragma once

// Trace data model: schemas, ingestion, serialization, splitting, windowing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bwpredict/error.hpp"

namespace bwp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Json = nlohmann::ordered_json;

enum class ColumnKind { continuous, categorical, binary };

inline std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
  }
  return "continuous";
}

inline ColumnKind column_kind_from_string(std::string_view s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "binary") return ColumnKind::binary;
  fail(ErrorKind::schema, "unknown column kind '" + std::string(s) + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::string unit;
};

// Ordered model-input columns plus optional auxiliary columns that are carried
// along with the samples but never fed to bandwidth predictors (e.g. the raw
// cell id behind the 5G cell-handoff flag).
struct FeatureSchema {
  std::string name;
  std::vector<ColumnSpec> columns;
  std::string target;
  std::vector<ColumnSpec> auxiliary;

  std::size_t width() const { return columns.size(); }
  std::size_t stored_width() const { return columns.size() + auxiliary.size(); }

  // Index into Sample::values, covering model and auxiliary columns.
  std::optional<std::size_t> find(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == column) return i;
    for (std::size_t i = 0; i < auxiliary.size(); ++i)
      if (auxiliary[i].name == column) return columns.size() + i;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view column) const {
    auto idx = find(column);
    if (!idx) fail(ErrorKind::schema, std::string(column));
    return *idx;
  }

  std::size_t target_index() const { return index_of(target); }

  const ColumnSpec& stored_column(std::size_t i) const {
    return i < columns.size() ? columns[i] : auxiliary.at(i - columns.size());
  }

  void validate() const {
    require(!columns.empty(), ErrorKind::schema, "schema '" + name + "' has no columns");
    std::vector<std::string> names;
    for (const auto& c : columns) names.push_back(c.name);
    for (const auto& c : auxiliary) names.push_back(c.name);
    std::sort(names.begin(), names.end());
    auto dup = std::adjacent_find(names.begin(), names.end());
    require(dup == names.end(), ErrorKind::schema, "duplicate column '" + (dup == names.end() ? std::string() : *dup) + "'");
    bool found = false;
    for (const auto& c : columns) {
      if (c.name == target) {
        require(c.kind == ColumnKind::continuous, ErrorKind::schema, "target column '" + target + "' must be continuous");
        found = true;
      }
    }
    require(found, ErrorKind::schema, "target column '" + target + "' not among model columns");
  }

  // LTE schema: eight per-second features.
  static FeatureSchema lte8() {
    return FeatureSchema{
        "lte8",
        {{"BW", ColumnKind::continuous, "Mbps"},
         {"LTE-neighbors", ColumnKind::continuous, "count"},
         {"RSSI", ColumnKind::continuous, "dBm"},
         {"RSRQ", ColumnKind::continuous, "dB"},
         {"Echng", ColumnKind::binary, ""},
         {"TA", ColumnKind::continuous, "steps"},
         {"Speed", ColumnKind::continuous, "m/s"},
         {"Band", ColumnKind::categorical, ""}},
        "BW",
        {}};
  }

  // 5G schema: twelve features from the driving traces. CellID is auxiliary;
  // Cell-handoff is derived from it when a CSV only carries the raw id.
  static FeatureSchema nr5g12() {
    return FeatureSchema{
        "5g12",
        {{"DL", ColumnKind::continuous, "Mbps"},
         {"UL", ColumnKind::continuous, "Mbps"},
         {"RSSI", ColumnKind::continuous, "dBm"},
         {"RSRQ", ColumnKind::continuous, "dB"},
         {"RSRP", ColumnKind::continuous, "dBm"},
         {"NRxSRP", ColumnKind::continuous, "dBm"},
         {"NRxSRQ", ColumnKind::continuous, "dB"},
         {"SNR", ColumnKind::continuous, "dB"},
         {"CQI", ColumnKind::continuous, ""},
         {"NetworkMode", ColumnKind::categorical, ""},
         {"Cell-handoff", ColumnKind::binary, ""},
         {"Speed", ColumnKind::continuous, "km/h"}},
        "DL",
        {{"CellID", ColumnKind::categorical, ""}}};
  }

  static FeatureSchema by_name(std::string_view schema_name) {
    if (schema_name == "lte8") return lte8();
    if (schema_name == "5g12") return nr5g12();
    fail(ErrorKind::config, "unknown schema '" + std::string(schema_name) + "'");
  }

  bool operator==(const FeatureSchema& other) const {
    auto same = [](const std::vector<ColumnSpec>& a, const std::vector<ColumnSpec>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || a[i].kind != b[i].kind) return false;
      return true;
    };
    return name == other.name && target == other.target && same(columns, other.columns) &&
           same(auxiliary, other.auxiliary);
  }
};

struct Sample {
  std::int64_t t = 0;
  std::vector<double> values;  // schema columns, then auxiliary columns
  std::optional<int> mode;     // 1 = 5G access

  bool operator==(const Sample&) const = default;
};

// Column name -> labels, where a label's position is its integer code.
using CodeMaps = std::map<std::string, std::vector<std::string>>;

struct IngestReport {
  std::map<std::string, std::size_t> filled_cells;  // forward/zero filled gaps
  std::vector<std::string> derived_columns;
  std::vector<std::string> warnings;
};

class Trace {
 public:
  Trace(FeatureSchema schema, std::vector<Sample> samples, std::string route_id = "trace",
        std::int64_t period = 1, CodeMaps code_maps = {})
      : schema_(std::move(schema)),
        samples_(std::move(samples)),
        route_id_(std::move(route_id)),
        period_(period),
        code_maps_(std::move(code_maps)) {
    validate();
  }

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  const std::string& route_id() const { return route_id_; }
  std::int64_t period() const { return period_; }
  const CodeMaps& code_maps() const { return code_maps_; }
  const IngestReport& ingest_report() const { return report_; }
  void set_ingest_report(IngestReport report) { report_ = std::move(report); }

  bool has_mode() const {
    return std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.mode.has_value(); });
  }

  std::vector<double> column(std::string_view name) const {
    const std::size_t idx = schema_.index_of(name);
    std::vector<double> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.values[idx]);
    return out;
  }

  std::vector<double> bandwidth() const { return column(schema_.target); }

  std::vector<int> modes() const {
    require(has_mode(), ErrorKind::data, "trace '" + route_id_ + "' has no access-mode annotation");
    std::vector<int> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(*s.mode);
    return out;
  }

  // Contiguous sub-trace [begin, end); timestamps are kept as-is.
  Trace slice(std::size_t begin, std::size_t end, std::string suffix = "") const {
    require(begin < end && end <= samples_.size(), ErrorKind::config, "invalid trace slice");
    std::vector<Sample> part(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                             samples_.begin() + static_cast<std::ptrdiff_t>(end));
    Trace out(schema_, std::move(part), route_id_ + suffix, period_, code_maps_);
    out.report_ = report_;
    return out;
  }

 private:
  void validate() const {
    schema_.validate();
    require(!samples_.empty(), ErrorKind::empty_input, "trace '" + route_id_ + "' has no samples");
    require(period_ >= 1, ErrorKind::config, "sampling period must be >= 1");
    const std::size_t width = schema_.stored_width();
    const std::size_t bw = schema_.target_index();
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const auto& s = samples_[i];
      require(s.values.size() == width, ErrorKind::schema,
              "sample " + std::to_string(i) + " has " + std::to_string(s.values.size()) + " values, schema expects " +
                  std::to_string(width));
      for (double v : s.values)
        require(std::isfinite(v), ErrorKind::data, "non-finite value in sample " + std::to_string(i));
      require(s.values[bw] >= 0.0, ErrorKind::data, "negative bandwidth in sample " + std::to_string(i));
      if (s.mode) require(*s.mode == 0 || *s.mode == 1, ErrorKind::data, "mode must be 0 or 1");
      if (i > 0)
        require(s.t - samples_[i - 1].t == period_, ErrorKind::data,
                "timestamps must be strictly increasing with spacing " + std::to_string(period_) + " (sample " +
                    std::to_string(i) + ")");
    }
  }

  FeatureSchema schema_;
  std::vector<Sample> samples_;
  std::string route_id_;
  std::int64_t period_;
  CodeMaps code_maps_;
  IngestReport report_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  if (e - b >= 2 && s[b] == '"' && s[e - 1] == '"') {
    ++b;
    --e;
  }
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cur.push_back(c);
    } else if (c == ',' && !quoted) {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "N/A" || cell == "NaN" || cell == "nan" || cell == "null" ||
         cell == "-";
}

inline std::optional<double> parse_double(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(cell, &used);
  } catch (...) {
    return std::nullopt;
  }
  if (used != cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline int mode_from_label(const std::string& label) {
  if (auto v = parse_double(label)) return *v != 0.0 ? 1 : 0;
  std::string up;
  for (char c : label) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return (up == "5G" || up == "NR" || up == "SA" || up == "NSA" || up.rfind("5G", 0) == 0) ? 1 : 0;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace detail

// Parses a header-first CSV. Extra columns are ignored; `ts` (integer seconds)
// is used for timestamps when present; categorical columns get codes in order
// of first appearance; gaps are forward filled (leading gaps become 0).
inline Trace ingest_csv_stream(std::istream& in, const FeatureSchema& schema, std::string route_id = "trace") {
  schema.validate();
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  require(!header.empty(), ErrorKind::empty_input, "empty input: no header row");

  auto header_index = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };

  IngestReport report;
  const std::size_t width = schema.stored_width();
  std::vector<std::optional<std::size_t>> source(width);
  for (std::size_t c = 0; c < width; ++c) source[c] = header_index(schema.stored_column(c).name);

  // Cell-handoff and CellID can stand in for each other.
  const auto handoff_idx = schema.find("Cell-handoff");
  const auto cell_idx = schema.find("CellID");
  const bool derive_handoff = handoff_idx && cell_idx && !source[*handoff_idx] && source[*cell_idx];
  const bool derive_cell = handoff_idx && cell_idx && !source[*cell_idx] && source[*handoff_idx];
  for (std::size_t c = 0; c < schema.width(); ++c) {
    if (source[c]) continue;
    if (derive_handoff && c == *handoff_idx) continue;
    fail(ErrorKind::schema, schema.columns[c].name);
  }
  if (cell_idx && !source[*cell_idx] && !derive_cell) fail(ErrorKind::schema, "CellID");

  const auto ts_col = header_index("ts");
  const auto mode_col = header_index("mode");
  const auto net_idx = schema.find("NetworkMode");

  CodeMaps maps;
  std::vector<std::map<std::string, int>> lookup(width);
  std::vector<std::optional<double>> last(width);
  std::optional<std::string> last_mode_label;
  std::vector<Sample> samples;
  std::size_t row = 0;

  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    Sample s;
    s.values.assign(width, 0.0);
    for (std::size_t c = 0; c < width; ++c) {
      if (!source[c]) continue;
      const auto& spec = schema.stored_column(c);
      const std::string cell = *source[c] < cells.size() ? cells[*source[c]] : std::string();
      if (detail::is_missing(cell)) {
        s.values[c] = last[c].value_or(0.0);
        ++report.filled_cells[spec.name];
        continue;
      }
      double v = 0;
      if (spec.kind == ColumnKind::categorical) {
        auto& table = lookup[c];
        auto it = table.find(cell);
        if (it == table.end()) {
          const int code = static_cast<int>(table.size());
          it = table.emplace(cell, code).first;
          maps[spec.name].push_back(cell);
        }
        v = it->second;
        if (net_idx && c == *net_idx) last_mode_label = cell;
      } else {
        auto parsed = detail::parse_double(cell);
        if (!parsed)
          fail(ErrorKind::parse, "row " + std::to_string(row) + ": cannot parse '" + cell + "' in column " + spec.name);
        v = spec.kind == ColumnKind::binary ? (*parsed != 0.0 ? 1.0 : 0.0) : *parsed;
      }
      s.values[c] = v;
      last[c] = v;
    }
    if (ts_col) {
      const std::string cell = *ts_col < cells.size() ? cells[*ts_col] : std::string();
      auto parsed = detail::parse_double(cell);
      if (!parsed || std::floor(*parsed) != *parsed)
        fail(ErrorKind::parse, "row " + std::to_string(row) + ": timestamp '" + cell + "' is not integer seconds");
      s.t = static_cast<std::int64_t>(*parsed);
    } else {
      s.t = static_cast<std::int64_t>(row - 1);
    }
    if (mode_col) {
      const std::string cell = *mode_col < cells.size() ? cells[*mode_col] : std::string();
      if (!detail::is_missing(cell)) s.mode = detail::mode_from_label(cell);
      else if (!samples.empty()) s.mode = samples.back().mode;
    } else if (net_idx) {
      s.mode = last_mode_label ? detail::mode_from_label(*last_mode_label) : 0;
    }
    samples.push_back(std::move(s));
  }
  require(!samples.empty(), ErrorKind::empty_input, "empty input: no data rows");

  if (derive_handoff) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      samples[i].values[*handoff_idx] =
          (i > 0 && samples[i].values[*cell_idx] != samples[i - 1].values[*cell_idx]) ? 1.0 : 0.0;
    report.derived_columns.push_back("Cell-handoff");
  }
  if (derive_cell) {
    int cell = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i > 0 && samples[i].values[*handoff_idx] != 0.0) ++cell;
      samples[i].values[*cell_idx] = cell;
    }
    for (int c = 0; c <= static_cast<int>(samples.back().values[*cell_idx]); ++c)
      maps["CellID"].push_back(std::to_string(c));
    report.derived_columns.push_back("CellID");
  }

  const std::int64_t t0 = samples.front().t;
  for (auto& s : samples) s.t -= t0;
  const std::int64_t period = samples.size() > 1 ? samples[1].t - samples[0].t : 1;
  require(period >= 1, ErrorKind::data, "timestamps must be strictly increasing");
  Trace trace(schema, std::move(samples), std::move(route_id), period, std::move(maps));
  trace.set_ingest_report(std::move(report));
  return trace;
}

inline Trace ingest_csv(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
  std::string route = path;
  if (auto slash = route.find_last_of('/'); slash != std::string::npos) route = route.substr(slash + 1);
  if (auto dot = route.find_last_of('.'); dot != std::string::npos && dot > 0) route = route.substr(0, dot);
  return ingest_csv_stream(in, schema, route);
}

// Writes a CSV that ingest_csv reads back to the same samples: categorical
// codes become their labels and values are printed with round-trip precision.
inline void write_csv(std::ostream& out, const Trace& trace) {
  const auto& schema = trace.schema();
  out << "ts";
  for (std::size_t c = 0; c < schema.stored_width(); ++c) out << ',' << schema.stored_column(c).name;
  if (trace.has_mode()) out << ",mode";
  out << '\n';
  for (const auto& s : trace.samples()) {
    out << s.t;
    for (std::size_t c = 0; c < schema.stored_width(); ++c) {
      const auto& spec = schema.stored_column(c);
      out << ',';
      if (spec.kind == ColumnKind::categorical) {
        auto it = trace.code_maps().find(spec.name);
        const auto code = static_cast<std::size_t>(s.values[c]);
        if (it != trace.code_maps().end() && code < it->second.size()) out << it->second[code];
        else out << detail::format_double(s.values[c]);
      } else {
        out << detail::format_double(s.values[c]);
      }
    }
    if (s.mode) out << ',' << *s.mode;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Versioned JSON serialization

inline constexpr int kFormatVersion = 1;

inline Json schema_to_json(const FeatureSchema& schema) {
  auto cols = [](const std::vector<ColumnSpec>& v) {
    Json arr = Json::array();
    for (const auto& c : v) arr.push_back({{"name", c.name}, {"kind", to_string(c.kind)}, {"unit", c.unit}});
    return arr;
  };
  return Json{{"name", schema.name}, {"target", schema.target}, {"columns", cols(schema.columns)},
              {"auxiliary", cols(schema.auxiliary)}};
}

inline FeatureSchema schema_from_json(const Json& j) {
  auto cols = [](const Json& arr) {
    std::vector<ColumnSpec> out;
    for (const auto& c : arr)
      out.push_back({c.at("name").get<std::string>(), column_kind_from_string(c.at("kind").get<std::string>()),
                     c.value("unit", std::string())});
    return out;
  };
  FeatureSchema s{j.at("name").get<std::string>(), cols(j.at("columns")), j.at("target").get<std::string>(),
                  j.contains("auxiliary") ? cols(j.at("auxiliary")) : std::vector<ColumnSpec>{}};
  s.validate();
  return s;
}

inline void check_header(const Json& j, std::string_view format) {
  require(j.is_object() && j.contains("format") && j.contains("version"), ErrorKind::parse,
          "missing format/version header");
  require(j.at("format").get<std::string>() == format, ErrorKind::parse,
          "expected format '" + std::string(format) + "', got '" + j.at("format").get<std::string>() + "'");
  const int version = j.at("version").get<int>();
  require(version == kFormatVersion, ErrorKind::version, "unsupported " + std::string(format) + " version " +
                                                             std::to_string(version));
}

inline Json header(std::string_view format) {
  return Json{{"format", std::string(format)}, {"version", kFormatVersion}};
}

inline Json trace_to_json(const Trace& trace) {
  Json j = header("bwpredict-trace");
  j["schema"] = schema_to_json(trace.schema());
  j["route_id"] = trace.route_id();
  j["period"] = trace.period();
  Json maps = Json::object();
  for (const auto& [col, labels] : trace.code_maps()) maps[col] = labels;
  j["code_maps"] = maps;
  Json rows = Json::array();
  for (const auto& s : trace.samples()) {
    Json row{{"t", s.t}, {"v", s.values}};
    if (s.mode) row["m"] = *s.mode;
    rows.push_back(std::move(row));
  }
  j["samples"] = std::move(rows);
  return j;
}

inline Trace trace_from_json(const Json& j) {
  check_header(j, "bwpredict-trace");
  CodeMaps maps;
  for (const auto& [col, labels] : j.at("code_maps").items()) maps[col] = labels.get<std::vector<std::string>>();
  std::vector<Sample> samples;
  for (const auto& row : j.at("samples")) {
    Sample s;
    s.t = row.at("t").get<std::int64_t>();
    s.values = row.at("v").get<std::vector<double>>();
    if (row.contains("m")) s.mode = row.at("m").get<int>();
    samples.push_back(std::move(s));
  }
  return Trace(schema_from_json(j.at("schema")), std::move(samples), j.at("route_id").get<std::string>(),
               j.at("period").get<std::int64_t>(), std::move(maps));
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "'" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

inline void save_trace(const std::string& path, const Trace& trace) { write_json_file(path, trace_to_json(trace)); }
inline Trace load_trace(const std::string& path) { return trace_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train = 0.6;
  double validation = 0.1;
  double test = 0.3;
};

struct TraceSplit {
  Trace train;
  Trace validation;
  Trace test;
};

struct SplitSizes {
  std::size_t train, validation, test;
};

inline SplitSizes split_sizes(std::size_t length, const SplitSpec& spec) {
  for (double r : {spec.train, spec.validation, spec.test})
    require(r >= 0.0 && r <= 1.0, ErrorKind::config, "split fractions must lie in [0,1]");
  require(std::abs(spec.train + spec.validation + spec.test - 1.0) <= 1e-9, ErrorKind::config,
          "split fractions must sum to 1");
  const auto tr = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(length) + 1e-9));
  const auto va = static_cast<std::size_t>(std::floor(spec.validation * static_cast<double>(length) + 1e-9));
  return {tr, va, length - tr - va};
}

// Contiguous train/validation/test segments; the floor remainder goes to test.
inline TraceSplit split(const Trace& trace, const SplitSpec& spec = {}) {
  require(trace.size() >= 10, ErrorKind::data,
          "trace of length " + std::to_string(trace.size()) + " is too short to split (need >= 10)");
  const auto sz = split_sizes(trace.size(), spec);
  require(sz.train > 0 && sz.validation > 0 && sz.test > 0, ErrorKind::config, "split produced an empty segment");
  return {trace.slice(0, sz.train, "/train"), trace.slice(sz.train, sz.train + sz.validation, "/val"),
          trace.slice(sz.train + sz.validation, trace.size(), "/test")};
}

// ---------------------------------------------------------------------------
// Normalization and windowing

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> constant;  // std was 0 and has been replaced by 1

  std::size_t width() const { return mean.size(); }
  double normalize(std::size_t col, double v) const { return (v - mean[col]) / std[col]; }
  double denormalize(std::size_t col, double z) const { return z * std[col] + mean[col]; }
};

inline NormStats compute_stats(const Trace& trace) {
  const std::size_t n = trace.schema().width();
  NormStats st{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  const double count = static_cast<double>(trace.size());
  for (const auto& s : trace.samples())
    for (std::size_t c = 0; c < n; ++c) st.mean[c] += s.values[c];
  for (auto& m : st.mean) m /= count;
  for (const auto& s : trace.samples())
    for (std::size_t c = 0; c < n; ++c) st.std[c] += (s.values[c] - st.mean[c]) * (s.values[c] - st.mean[c]);
  for (std::size_t c = 0; c < n; ++c) {
    st.std[c] = std::sqrt(st.std[c] / count);
    if (st.std[c] == 0.0) {
      st.std[c] = 1.0;
      st.constant[c] = true;
    }
  }
  return st;
}

inline Json stats_to_json(const NormStats& st) {
  std::vector<int> constant(st.constant.begin(), st.constant.end());
  return Json{{"mean", st.mean}, {"std", st.std}, {"constant", constant}};
}

inline NormStats stats_from_json(const Json& j) {
  NormStats st;
  st.mean = j.at("mean").get<std::vector<double>>();
  st.std = j.at("std").get<std::vector<double>>();
  for (int c : j.at("constant").get<std::vector<int>>()) st.constant.push_back(c != 0);
  return st;
}

struct WindowItem {
  Matrix input;        // w x n, normalized
  double target = 0;   // raw b(t + tau)
  std::size_t end = 0; // index of the window's last row in the source trace
};

struct WindowedDataset {
  std::size_t window = 0;
  std::size_t horizon = 0;
  std::size_t target_column = 0;
  NormStats stats;
  std::vector<WindowItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

// Raw w x n block of trace rows ending at index `end`.
inline Matrix raw_window(const Trace& trace, std::size_t end, std::size_t w) {
  require(end + 1 >= w && end < trace.size(), ErrorKind::data, "window exceeds trace bounds");
  const std::size_t n = trace.schema().width();
  Matrix m(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < w; ++r) {
    const auto& s = trace[end + 1 - w + r];
    for (std::size_t c = 0; c < n; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = s.values[c];
  }
  return m;
}

inline Matrix normalize_window(const Matrix& raw, const NormStats& stats) {
  require(static_cast<std::size_t>(raw.cols()) == stats.width(), ErrorKind::shape,
          "window has " + std::to_string(raw.cols()) + " columns, stats cover " + std::to_string(stats.width()));
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    for (Eigen::Index c = 0; c < raw.cols(); ++c)
      out(r, c) = stats.normalize(static_cast<std::size_t>(c), raw(r, c));
  return out;
}

// (w-row input, b(t + tau)) pairs; stats default to this trace's own.
inline WindowedDataset make_windows(const Trace& trace, std::size_t w, std::size_t tau,
                                    const std::optional<NormStats>& stats = std::nullopt) {
  require(w >= 1 && tau >= 1, ErrorKind::config, "window and horizon must be >= 1");
  require(trace.size() >= w + tau, ErrorKind::empty_input,
          "empty dataset: trace length " + std::to_string(trace.size()) + " < w + tau = " + std::to_string(w + tau));
  WindowedDataset ds;
  ds.window = w;
  ds.horizon = tau;
  ds.target_column = trace.schema().target_index();
  ds.stats = stats ? *stats : compute_stats(trace);
  require(ds.stats.width() == trace.schema().width(), ErrorKind::shape, "normalization stats width mismatch");
  const std::size_t count = trace.size() - w - tau + 1;
  ds.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t end = i + w - 1;
    ds.items.push_back({normalize_window(raw_window(trace, end, w), ds.stats),
                        trace[end + tau].values[ds.target_column], end});
  }
  return ds;
}

}  // namespace bwp
