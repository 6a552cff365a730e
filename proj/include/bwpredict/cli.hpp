#pragma once

// Command-line front end: subcommand parsing, config resolution and artifact output.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bwpredict/bench.hpp"
#include "bwpredict/features.hpp"
#include "bwpredict/handoff.hpp"
#include "bwpredict/synth.hpp"
#include "bwpredict/training.hpp"

namespace bwp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Raised for argument problems found after parsing (missing inputs); exits 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline std::string error_line(std::string_view kind, std::string_view message) {
  return "error: kind=" + std::string(kind) + " message=" + quoted(message);
}

// Keys accepted inside each subcommand's config-file section.
inline const std::map<std::string, std::set<std::string>>& section_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"ingest", {"csv", "schema", "route"}},
      {"synth", {"profile", "emit_profile"}},
      {"featimp", {"trace", "json", "screen"}},
      {"train", {"model", "trace", "horizon", "window"}},
      {"predict", {"model", "window"}},
      {"bench",
       {"trace", "predictors", "horizons", "window", "emit", "ewma_alpha", "harmonic_order", "rls_lambda", "rls_delta"}},
      {"handoff-train",
       {"trace", "features", "task", "window", "lookahead", "delta", "proximity", "positive_cap", "folds",
        "train_fraction", "rates"}},
      {"handoff-eval", {"model", "trace", "split", "plotdata"}},
      {"metrics", {"confusion", "csv", "task", "threshold"}},
  };
  return keys;
}

// Model sections hold library settings; seeds always come from the global seed.
inline std::set<std::string> model_section_keys(const std::string& name) {
  Json defaults;
  if (name == "network") defaults = to_json(TrainConfig{});
  if (name == "forest") defaults = to_json(ForestSettings{});
  if (name == "gbm") defaults = to_json(GbmSettings{});
  std::set<std::string> keys;
  for (const auto& [k, v] : defaults.items())
    if (k != "seed") keys.insert(k);
  return keys;
}

inline Json load_config(const std::string& path) {
  Json j = read_json_file(path);
  require(j.is_object(), ErrorKind::config, "config '" + path + "' must hold an object");
  if (j.contains("format") || j.contains("version")) check_header(j, "bwpredict-config");
  for (const auto& [key, value] : j.items()) {
    if (key == "format" || key == "version" || key == "seed" || key == "threads") continue;
    std::set<std::string> allowed;
    if (key == "network" || key == "forest" || key == "gbm") {
      allowed = model_section_keys(key);
    } else if (auto it = section_keys().find(key); it != section_keys().end()) {
      allowed = it->second;
    } else {
      fail(ErrorKind::config, "unknown config key '" + key + "'");
    }
    require(value.is_object(), ErrorKind::config, "config section '" + key + "' must be an object");
    for (const auto& [k, v] : value.items())
      require(allowed.count(k) > 0, ErrorKind::config, "unknown config key '" + key + "." + k + "'");
  }
  return j;
}

template <class T>
T config_value(const Json& j, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (j.is_array()) {
        std::string joined;
        for (const auto& item : j)
          joined += (joined.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
        return joined;
      }
    }
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::config, "config key '" + key + "' has the wrong type");
  }
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!bwp::detail::trim(item).empty()) out.push_back(bwp::detail::trim(item));
  return out;
}

inline std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::io, "cannot write '" + path + "'");
  return f;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto f = open_output(path);
  f << text;
}

}  // namespace detail

// State shared by every subcommand run.
struct Env {
  std::ostream& out;
  std::ostream& err;
  Json config = Json::object();
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 0;
  std::string out_path;
  Json resolved = Json::object();

  const Json& section(const std::string& name) const {
    static const Json empty = Json::object();
    return config.contains(name) ? config.at(name) : empty;
  }

  void require_out(std::string_view command) const {
    if (out_path.empty()) throw UsageError(std::string(command) + " needs --out");
  }

  void print_config() const { err << "config: " << resolved.dump() << "\n"; }

  template <class T, class FromJson>
  T model_settings(const std::string& name, const T& defaults, FromJson from_json) {
    Json merged = to_json(defaults);
    for (const auto& [k, v] : section(name).items()) merged[k] = v;
    T s;
    try {
      s = from_json(merged);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::config, "config section '" + name + "' has a value of the wrong type");
    }
    s.seed = seed;
    resolved[name] = to_json(s);
    return s;
  }

  TrainConfig network() { return model_settings("network", TrainConfig{}, train_config_from_json); }
  ForestSettings forest() {
    auto s = model_settings("forest", ForestSettings{}, forest_settings_from_json);
    s.threads = threads;
    return s;
  }
  GbmSettings gbm() { return model_settings("gbm", GbmSettings{}, gbm_settings_from_json); }
};

// Flag value if given, else the config section's value, else the default.
class Resolver {
 public:
  Resolver(Env& env, const std::string& command) : env_(env), section_(env.section(command)) {
    env_.resolved["command"] = command;
    env_.resolved["seed"] = env_.seed;
    env_.resolved["threads"] = env_.threads;
    env_.resolved["out"] = env_.out_path;
  }

  template <class T>
  T get(const CLI::Option* flag, const T& flag_value, const std::string& key, T fallback) {
    T v = std::move(fallback);
    if (section_.contains(key)) v = detail::config_value<T>(section_.at(key), key);
    if (flag->count() > 0) v = flag_value;
    env_.resolved[key] = v;
    return v;
  }

  template <class T>
  std::optional<T> get_optional(const CLI::Option* flag, const T& flag_value, const std::string& key) {
    std::optional<T> v;
    if (section_.contains(key)) v = detail::config_value<T>(section_.at(key), key);
    if (flag->count() > 0) v = flag_value;
    env_.resolved[key] = v ? Json(*v) : Json(nullptr);
    return v;
  }

 private:
  Env& env_;
  const Json& section_;
};

inline std::string required_input(const std::string& value, std::string_view command, std::string_view flag) {
  if (value.empty()) throw UsageError(std::string(command) + " needs " + std::string(flag));
  return value;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestCommand {
  std::string csv, schema = "lte8", route;
  CLI::Option *o_csv = nullptr, *o_schema = nullptr, *o_route = nullptr;

  void add(CLI::App& app) {
    o_csv = app.add_option("--csv", csv, "Input CSV file with a header row");
    o_schema = app.add_option("--schema", schema, "Feature schema")->check(CLI::IsMember({"lte8", "5g12"}));
    o_route = app.add_option("--route", route, "Route id stored in the trace (default: file stem)");
  }

  int run(Env& env) {
    Resolver r(env, "ingest");
    const auto path = r.get(o_csv, csv, "csv", std::string{});
    const auto schema_name = r.get(o_schema, schema, "schema", std::string{"lte8"});
    const auto route_id = r.get(o_route, route, "route", std::string{});
    env.print_config();
    required_input(path, "ingest", "--csv");
    env.require_out("ingest");

    Trace trace = ingest_csv(path, FeatureSchema::by_name(schema_name));
    if (!route_id.empty()) {
      auto report = trace.ingest_report();
      trace = Trace(trace.schema(), trace.samples(), route_id, trace.period(), trace.code_maps());
      trace.set_ingest_report(std::move(report));
    }
    save_trace(env.out_path, trace);
    env.out << "ingested " << trace.size() << " samples (" << schema_name << ") from " << path << "\n";
    for (const auto& [col, n] : trace.ingest_report().filled_cells)
      if (n > 0) env.out << "filled " << n << " missing cells in " << col << "\n";
    for (const auto& w : trace.ingest_report().warnings) env.out << "warning: " << w << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// synth

inline RouteProfile load_profile(const std::string& name) {
  if (name == "lte") return default_lte_profile();
  if (name == "5g") return default_5g_profile();
  return profile_from_json(read_json_file(name));
}

struct SynthCommand {
  std::string profile = "lte";
  bool emit_profile = false;
  CLI::Option *o_profile = nullptr, *o_emit = nullptr;

  void add(CLI::App& app) {
    o_profile = app.add_option("--profile", profile, "Route profile file, or the built-in 'lte' / '5g'");
    o_emit = app.add_flag("--emit-profile", emit_profile, "Write the resolved profile instead of a trace");
  }

  int run(Env& env) {
    Resolver r(env, "synth");
    const auto name = r.get(o_profile, profile, "profile", std::string{"lte"});
    const bool emit = r.get(o_emit, emit_profile, "emit_profile", false);
    RouteProfile p = load_profile(name);
    if (env.seed_given) p.seed = env.seed;
    env.resolved["profile_seed"] = p.seed;
    env.print_config();
    env.require_out("synth");

    if (emit) {
      write_json_file(env.out_path, profile_to_json(p));
      env.out << "wrote profile " << p.route_id << " to " << env.out_path << "\n";
      return kExitOk;
    }
    const Trace trace = generate(p);
    save_trace(env.out_path, trace);
    const auto bw = trace.bandwidth();
    env.out << "generated " << trace.size() << " samples (" << p.schema << ", " << p.trip_count << " trips x "
            << p.route_length << " s), mean bandwidth " << std::fixed << std::setprecision(4) << mean_of(bw)
            << " Mbps\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// featimp

struct FeatimpCommand {
  std::string trace;
  bool json = false;
  double screen = 0.3;
  CLI::Option *o_trace = nullptr, *o_json = nullptr, *o_screen = nullptr;

  void add(CLI::App& app) {
    o_trace = app.add_option("--trace", trace, "Trace file");
    o_json = app.add_flag("--json", json, "Print the JSON report instead of the table");
    o_screen = app.add_option("--screen", screen, "Also run the correlation screen at this |r| threshold")
                   ->check(CLI::Range(0.0, 1.0));
  }

  int run(Env& env) {
    Resolver r(env, "featimp");
    const auto path = r.get(o_trace, trace, "trace", std::string{});
    const bool as_json = r.get(o_json, json, "json", false);
    const auto threshold = r.get_optional(o_screen, screen, "screen");
    const auto forest = env.forest();
    env.print_config();
    required_input(path, "featimp", "--trace");

    const Trace t = load_trace(path);
    const auto rep = rf_importance(t, forest);
    Json j = to_json(rep);
    std::string table = importance_table(rep);
    if (threshold) {
      const auto sc = cross_correlation_screen(t, *threshold);
      Json corr = Json::object();
      std::ostringstream s;
      s << "\nCorrelation screen (|r| >= " << *threshold << ")\n" << std::left << std::setw(16) << "Feature"
        << "r\n" << std::fixed << std::setprecision(4);
      for (const auto& [name, v] : sc.correlations) {
        corr[name] = v ? Json(*v) : Json(nullptr);
        s << std::left << std::setw(16) << name;
        if (v)
          s << *v;
        else
          s << "n/a";
        s << "\n";
      }
      s << "selected:";
      for (const auto& name : sc.selected) s << ' ' << name;
      s << "\n";
      for (const auto& w : sc.warnings) s << "warning: " << w << "\n";
      j["screen"] = {{"threshold", *threshold}, {"correlations", corr}, {"selected", sc.selected},
                     {"warnings", sc.warnings}};
      table += s.str();
    }
    for (const auto& w : rep.warnings) table += "warning: " + w + "\n";
    if (!env.out_path.empty()) write_json_file(env.out_path, j);
    if (as_json)
      env.out << j.dump(1) << "\n";
    else
      env.out << table;
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// train / predict

struct TrainCommand {
  std::string model = "tpa", trace;
  std::size_t horizon = 1, window = 5;
  CLI::Option *o_model = nullptr, *o_trace = nullptr, *o_horizon = nullptr, *o_window = nullptr;

  void add(CLI::App& app) {
    o_model = app.add_option("--model", model, "Model kind")->check(CLI::IsMember({"lstm", "tpa"}));
    o_trace = app.add_option("--trace", trace, "Trace file");
    o_horizon = app.add_option("--horizon", horizon, "Forecast horizon in seconds")->check(CLI::PositiveNumber);
    o_window = app.add_option("--window", window, "Input window length")->check(CLI::PositiveNumber);
  }

  int run(Env& env) {
    Resolver r(env, "train");
    const auto kind = nn::model_kind_from_string(r.get(o_model, model, "model", std::string{"tpa"}));
    const auto path = r.get(o_trace, trace, "trace", std::string{});
    const auto tau = r.get(o_horizon, horizon, "horizon", std::size_t{1});
    const auto w = r.get(o_window, window, "window", std::size_t{5});
    const auto cfg = env.network();
    env.print_config();
    required_input(path, "train", "--trace");
    env.require_out("train");
    require(tau >= 1 && w >= 1, ErrorKind::config, "window and horizon must be >= 1");

    const Trace t = load_trace(path);
    const auto parts = split(t);
    const auto train_set = make_windows(parts.train, w, tau);
    const auto val_set = make_windows(parts.validation, w, tau, train_set.stats);
    auto res = train(kind, train_set, val_set, cfg);
    auto& p = res.predictor;
    p.schema = t.schema();
    p.code_maps = t.code_maps();
    p.reference_window = raw_window(t, t.size() - 1, w);
    write_json_file(env.out_path, model_to_json(p));

    const std::size_t test_start = parts.train.size() + parts.validation.size();
    std::vector<double> pred, truth;
    for (std::size_t end = test_start + w - 1; end + tau < t.size(); ++end) {
      pred.push_back(p.predict(raw_window(t, end, w)));
      truth.push_back(t[end + tau].values[t.schema().target_index()]);
    }
    env.out << "trained " << nn::to_string(kind) << " (window " << w << ", horizon " << tau << ") for "
            << res.log.epochs.size() << " epochs, best epoch " << res.log.best_epoch << "\n";
    if (!pred.empty()) {
      const auto m = regression_metrics(pred, truth, tau, "test");
      env.out << std::fixed << std::setprecision(4) << "test RMSE " << m.rmse << "  MAE " << m.mae << "  CORR ";
      if (m.corr)
        env.out << *m.corr;
      else
        env.out << "n/a";
      env.out << "  (" << m.count << " samples)\n";
    }
    return kExitOk;
  }
};

// The trace's code maps must agree with the model's for every shared code.
inline void check_code_maps(const CodeMaps& model, const CodeMaps& trace) {
  for (const auto& [col, labels] : trace) {
    auto it = model.find(col);
    if (it == model.end()) continue;
    const bool prefix = labels.size() <= it->second.size() && std::equal(labels.begin(), labels.end(), it->second.begin());
    require(prefix, ErrorKind::schema, "categorical codes of column '" + col + "' differ from the model's");
  }
}

struct PredictCommand {
  std::string model, window = "last";
  CLI::Option *o_model = nullptr, *o_window = nullptr;

  void add(CLI::App& app) {
    o_model = app.add_option("--model", model, "Model file written by train");
    o_window = app.add_option("--window", window,
                              "'last' for the training trace's final window, or a trace/CSV file whose last rows "
                              "form the window");
  }

  int run(Env& env) {
    Resolver r(env, "predict");
    const auto path = r.get(o_model, model, "model", std::string{});
    const auto source = r.get(o_window, window, "window", std::string{"last"});
    env.print_config();
    required_input(path, "predict", "--model");

    NeuralPredictor p = model_from_json(read_json_file(path));
    Matrix input;
    if (source == "last") {
      require(p.reference_window.has_value(), ErrorKind::data, "model file stores no reference window");
      input = *p.reference_window;
    } else {
      const bool csv = std::filesystem::path(source).extension() == ".csv";
      const Trace t = csv ? ingest_csv(source, p.schema) : load_trace(source);
      require(t.schema() == p.schema, ErrorKind::schema, "window source schema differs from the model's");
      check_code_maps(p.code_maps, t.code_maps());
      require(t.size() >= p.window(), ErrorKind::data,
              "window source has " + std::to_string(t.size()) + " rows, model needs " + std::to_string(p.window()));
      input = raw_window(t, t.size() - 1, p.window());
    }
    const double v = p.predict(input);
    env.out << bwp::detail::format_double(v) << "\n";
    if (!env.out_path.empty()) {
      Json j = header("bwpredict-report");
      j["report"] = "prediction";
      j["model"] = nn::to_string(p.model().kind);
      j["horizon"] = p.horizon();
      j["mbps"] = v;
      write_json_file(env.out_path, j);
    }
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// bench

struct BenchCommand {
  std::vector<std::string> traces;
  std::string predictors, horizons, emit = "table";
  std::size_t window = 5, harmonic_order = 5;
  double ewma_alpha = 0.5, rls_lambda = 0.99, rls_delta = 0.01;
  CLI::Option *o_trace = nullptr, *o_predictors = nullptr, *o_horizons = nullptr, *o_emit = nullptr,
              *o_window = nullptr, *o_alpha = nullptr, *o_order = nullptr, *o_lambda = nullptr, *o_delta = nullptr;

  void add(CLI::App& app) {
    o_trace = app.add_option("--trace", traces, "Trace file (repeatable)");
    o_predictors = app.add_option("--predictors", predictors,
                                  "Comma-separated subset of history,ewma,harmonic,rls,rf,lstm,tpa");
    o_horizons = app.add_option("--horizons", horizons, "Comma-separated horizons (default 1,2,3)");
    o_emit = app.add_option("--emit", emit, "Output kind")->check(CLI::IsMember({"table", "csv", "json", "plotdata"}));
    o_window = app.add_option("--window", window, "Window for rls, lstm and tpa")->check(CLI::PositiveNumber);
    o_alpha = app.add_option("--ewma-alpha", ewma_alpha, "EWMA smoothing factor")->check(CLI::Range(0.0, 1.0));
    o_order = app.add_option("--harmonic-order", harmonic_order, "Harmonic-mean history length")
                  ->check(CLI::PositiveNumber);
    o_lambda = app.add_option("--rls-lambda", rls_lambda, "RLS forgetting factor")->check(CLI::Range(0.0, 1.0));
    o_delta = app.add_option("--rls-delta", rls_delta, "RLS initial inverse-correlation scale");
  }

  static std::vector<std::size_t> parse_horizons(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : detail::split_list(s)) {
      std::size_t pos = 0;
      long long v = 0;
      try {
        v = std::stoll(item, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      require(pos == item.size() && v >= 1, ErrorKind::config, "invalid horizon '" + item + "'");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  static std::string default_out(const std::string& emit) {
    if (emit == "csv") return "bench.csv";
    if (emit == "json") return "bench.json";
    if (emit == "plotdata") return "plotdata";
    return "bench.txt";
  }

  int run(Env& env) {
    Resolver r(env, "bench");
    BenchConfig cfg;
    const auto paths = r.get(o_trace, traces, "trace", std::vector<std::string>{});
    if (const auto p = r.get_optional(o_predictors, predictors, "predictors")) cfg.predictors = detail::split_list(*p);
    if (const auto h = r.get_optional(o_horizons, horizons, "horizons")) cfg.horizons = parse_horizons(*h);
    const auto kind = r.get(o_emit, emit, "emit", std::string{"table"});
    cfg.window = r.get(o_window, window, "window", cfg.window);
    cfg.ewma_alpha = r.get(o_alpha, ewma_alpha, "ewma_alpha", cfg.ewma_alpha);
    cfg.harmonic_order = r.get(o_order, harmonic_order, "harmonic_order", cfg.harmonic_order);
    cfg.rls_lambda = r.get(o_lambda, rls_lambda, "rls_lambda", cfg.rls_lambda);
    cfg.rls_delta = r.get(o_delta, rls_delta, "rls_delta", cfg.rls_delta);
    cfg.train = env.network();
    cfg.forest = env.forest();
    cfg.seed = env.seed;
    cfg.threads = env.threads;
    if (env.out_path.empty()) env.out_path = default_out(kind);
    env.resolved["out"] = env.out_path;
    env.resolved["predictors"] = cfg.predictors;
    env.resolved["horizons"] = cfg.horizons;
    env.print_config();
    if (paths.empty()) throw UsageError("bench needs --trace");
    require(kind == "table" || kind == "csv" || kind == "json" || kind == "plotdata", ErrorKind::config,
            "unknown emit kind '" + kind + "'");

    std::vector<Trace> loaded;
    for (const auto& p : paths) loaded.push_back(load_trace(p));
    std::set<std::string> ids;
    for (const auto& t : loaded)
      require(ids.insert(t.route_id()).second, ErrorKind::config, "duplicate trace id '" + t.route_id() + "'");
    const auto table = run_bench(loaded, cfg);
    const auto text = render_table(table);
    env.out << text;
    if (kind == "table")
      detail::write_text(env.out_path, "# format=bwpredict-report version=" + std::to_string(kFormatVersion) +
                                           " report=bench-table\n" + text);
    else if (kind == "csv")
      detail::write_text(env.out_path, to_csv(table));
    else if (kind == "json")
      write_json_file(env.out_path, to_json(table));
    else
      write_plotdata(table, loaded, env.out_path);
    env.out << "wrote " << env.out_path << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// handoff-train / handoff-eval

// Everything needed to rebuild the dataset and split a handoff model was trained on.
struct HandoffArtifact {
  std::string task = "binary";
  FeatureSet features = FeatureSet::all;
  std::size_t window = 5;
  std::size_t lookahead = 3;
  std::size_t delta = 8;
  std::size_t proximity = 30;
  std::size_t positive_cap = 0;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::map<std::string, TreeEnsemble> models;
  Json selection = Json::object();

  HandoffDataset dataset(const Trace& trace) const {
    if (task == "continuous") return build_continuous_dataset(trace, {window, delta, features});
    BinaryDatasetConfig c;
    c.window = window;
    c.lookahead = lookahead;
    c.positive_cap = positive_cap;
    c.proximity = proximity;
    c.features = features;
    c.seed = seed;
    return build_binary_dataset(trace, c);
  }

  SampleSplit split_samples(const HandoffDataset& ds) const {
    return task == "continuous" ? contiguous_split(ds.samples, train_fraction)
                                : shuffle_split(ds.samples, train_fraction, seed);
  }
};

inline Json to_json(const HandoffArtifact& a) {
  Json j = header("bwpredict-handoff-model");
  j["task"] = a.task;
  j["features"] = to_string(a.features);
  j["window"] = a.window;
  j["lookahead"] = a.lookahead;
  j["delta"] = a.delta;
  j["proximity"] = a.proximity;
  j["positive_cap"] = a.positive_cap;
  j["train_fraction"] = a.train_fraction;
  j["seed"] = a.seed;
  j["feature_names"] = a.feature_names;
  j["selection"] = a.selection;
  Json models = Json::object();
  for (const auto& [name, m] : a.models) models[name] = ensemble_to_json(m);
  j["models"] = models;
  return j;
}

inline HandoffArtifact handoff_artifact_from_json(const Json& j) {
  check_header(j, "bwpredict-handoff-model");
  HandoffArtifact a;
  try {
    a.task = j.at("task").get<std::string>();
    a.features = feature_set_from_string(j.at("features").get<std::string>());
    a.window = j.at("window").get<std::size_t>();
    a.lookahead = j.at("lookahead").get<std::size_t>();
    a.delta = j.at("delta").get<std::size_t>();
    a.proximity = j.at("proximity").get<std::size_t>();
    a.positive_cap = j.at("positive_cap").get<std::size_t>();
    a.train_fraction = j.at("train_fraction").get<double>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    a.selection = j.at("selection");
    for (const auto& [name, m] : j.at("models").items()) a.models.emplace(name, ensemble_from_json(m));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("handoff model: ") + e.what());
  }
  require(a.task == "binary" || a.task == "separated" || a.task == "continuous", ErrorKind::parse,
          "handoff model has unknown task '" + a.task + "'");
  return a;
}

inline Json selection_to_json(const RateSelection& s) {
  Json rows = Json::array();
  for (const auto& r : s.table)
    rows.push_back({{"learning_rate", r.learning_rate}, {"fold_accuracies", r.fold_accuracies},
                    {"mean_accuracy", r.mean_accuracy}});
  return {{"learning_rate", s.learning_rate}, {"cv", rows}};
}

inline std::string selection_table(const std::string& title, const RateSelection& s) {
  std::ostringstream out;
  out << title << "\n" << std::left << std::setw(14) << "Learning rate";
  if (!s.table.empty())
    for (std::size_t f = 0; f < s.table.front().fold_accuracies.size(); ++f)
      out << std::setw(10) << ("Fold " + std::to_string(f + 1));
  out << "Mean\n" << std::fixed << std::setprecision(4);
  for (const auto& r : s.table) {
    out << std::left << std::setw(14) << r.learning_rate;
    for (double a : r.fold_accuracies) out << std::setw(10) << a;
    out << r.mean_accuracy << (r.learning_rate == s.learning_rate ? "  *" : "") << "\n";
  }
  return out.str();
}

struct HandoffTrainCommand {
  std::string trace, features = "all", task = "binary", rates;
  std::size_t window = 5, lookahead = 3, delta = 8, proximity = 30, positive_cap = 0, folds = 5;
  double train_fraction = 0.7;
  CLI::Option *o_trace = nullptr, *o_features = nullptr, *o_task = nullptr, *o_window = nullptr,
              *o_lookahead = nullptr, *o_delta = nullptr, *o_proximity = nullptr, *o_cap = nullptr,
              *o_folds = nullptr, *o_fraction = nullptr, *o_rates = nullptr;

  void add(CLI::App& app) {
    o_trace = app.add_option("--trace", trace, "5G trace file");
    o_features = app.add_option("--features", features, "Feature set")->check(CLI::IsMember({"all", "bw", "nobw"}));
    o_task = app.add_option("--task", task, "Prediction task")
                 ->check(CLI::IsMember({"binary", "separated", "continuous"}));
    o_window = app.add_option("--window", window, "Input window (default 5, or 10 for continuous)")
                   ->check(CLI::PositiveNumber);
    o_lookahead = app.add_option("--lookahead", lookahead, "Binary label lookahead in seconds")
                      ->check(CLI::PositiveNumber);
    o_delta = app.add_option("--delta", delta, "Continuous target span in seconds")->check(CLI::PositiveNumber);
    o_proximity = app.add_option("--proximity", proximity, "Seconds around a switch that count as near");
    o_cap = app.add_option("--positive-cap", positive_cap, "Maximum number of positives (0 keeps all)");
    o_folds = app.add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    o_fraction = app.add_option("--train-fraction", train_fraction, "Share of samples used for training")
                     ->check(CLI::Range(0.0, 1.0));
    o_rates = app.add_option("--rates", rates, "Comma-separated learning-rate grid");
  }

  int run(Env& env) {
    Resolver r(env, "handoff-train");
    HandoffArtifact a;
    const auto path = r.get(o_trace, trace, "trace", std::string{});
    a.features = feature_set_from_string(r.get(o_features, features, "features", std::string{"all"}));
    a.task = r.get(o_task, task, "task", std::string{"binary"});
    require(a.task == "binary" || a.task == "separated" || a.task == "continuous", ErrorKind::config,
            "unknown task '" + a.task + "'");
    const bool continuous = a.task == "continuous";
    a.window = r.get(o_window, window, "window", continuous ? std::size_t{10} : std::size_t{5});
    a.lookahead = r.get(o_lookahead, lookahead, "lookahead", a.lookahead);
    a.delta = r.get(o_delta, delta, "delta", a.delta);
    a.proximity = r.get(o_proximity, proximity, "proximity", a.proximity);
    a.positive_cap = r.get(o_cap, positive_cap, "positive_cap", a.positive_cap);
    const auto k = r.get(o_folds, folds, "folds", std::size_t{5});
    a.train_fraction = r.get(o_fraction, train_fraction, "train_fraction", a.train_fraction);
    std::vector<double> grid = default_learning_rates();
    if (const auto g = r.get_optional(o_rates, rates, "rates")) {
      grid.clear();
      for (const auto& item : detail::split_list(*g)) {
        std::size_t pos = 0;
        double v = 0;
        try {
          v = std::stod(item, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        require(pos == item.size() && v > 0, ErrorKind::config, "invalid learning rate '" + item + "'");
        grid.push_back(v);
      }
    }
    env.resolved["rates"] = grid;
    a.seed = env.seed;
    const auto gbm = env.gbm();
    env.print_config();
    required_input(path, "handoff-train", "--trace");
    env.require_out("handoff-train");
    require(a.train_fraction > 0.0 && a.train_fraction < 1.0, ErrorKind::config, "train fraction must lie in (0,1)");

    const Trace t = load_trace(path);
    const auto ds = a.dataset(t);
    a.feature_names = ds.feature_names;
    const auto parts = a.split_samples(ds);
    env.out << "dataset: " << ds.samples.size() << " samples";
    if (!continuous) env.out << " (" << ds.positives << " positive, " << ds.negatives << " negative)";
    env.out << ", " << ds.switches << " mode switches; " << parts.train.size() << " train / " << parts.test.size()
            << " held out\n";
    if (a.task == "binary") {
      auto res = train_binary(parts.train, gbm, k, grid, env.seed);
      a.selection = selection_to_json(res.selection);
      a.models.emplace("unified", std::move(res.model));
      env.out << selection_table("Cross-validation (unified)", res.selection);
    } else if (a.task == "separated") {
      auto res = train_separated(parts.train, gbm, k, grid, env.seed);
      a.selection = {{"from_5g", selection_to_json(res.from_5g.selection)},
                     {"from_4g", selection_to_json(res.from_4g.selection)}};
      env.out << selection_table("Cross-validation (5G->4G)", res.from_5g.selection)
              << selection_table("Cross-validation (4G->5G)", res.from_4g.selection);
      a.models.emplace("from_5g", std::move(res.from_5g.model));
      a.models.emplace("from_4g", std::move(res.from_4g.model));
    } else {
      require(!parts.train.empty(), ErrorKind::empty_input, "continuous training split is empty");
      a.models.emplace("regressor", train_continuous(parts.train, gbm));
      a.selection = {{"learning_rate", gbm.learning_rate}};
      env.out << "trained regressor with " << gbm.estimators << " stages\n";
    }
    write_json_file(env.out_path, to_json(a));
    env.out << "wrote " << env.out_path << "\n";
    return kExitOk;
  }
};

inline std::string classification_table(const std::vector<std::pair<std::string, ClassificationReport>>& cols) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Metric";
  for (const auto& [name, rep] : cols) out << std::setw(12) << name;
  out << "\n";
  auto row = [&](const std::string& label, auto value) {
    out << std::left << std::setw(12) << label;
    for (const auto& [name, rep] : cols) out << std::setw(12) << value(rep);
    out << "\n";
  };
  auto fixed = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };
  row("TP", [](const ClassificationReport& c) { return std::to_string(c.counts.tp); });
  row("FP", [](const ClassificationReport& c) { return std::to_string(c.counts.fp); });
  row("FN", [](const ClassificationReport& c) { return std::to_string(c.counts.fn); });
  row("TN", [](const ClassificationReport& c) { return std::to_string(c.counts.tn); });
  row("TPR", [&](const ClassificationReport& c) { return fixed(c.tpr); });
  row("FPR", [&](const ClassificationReport& c) { return fixed(c.fpr); });
  row("Accuracy", [&](const ClassificationReport& c) { return fixed(c.accuracy); });
  row("Precision", [&](const ClassificationReport& c) { return fixed(c.precision); });
  row("Recall", [&](const ClassificationReport& c) { return fixed(c.recall); });
  row("F1", [&](const ClassificationReport& c) { return fixed(c.f1); });
  row("AUC", [&](const ClassificationReport& c) { return c.auc ? fixed(*c.auc) : std::string("n/a"); });
  return out.str();
}

inline void write_roc_csv(const std::string& path, const ClassificationReport& rep) {
  auto f = detail::open_output(path);
  f << "# format=bwpredict-plotdata version=" << kFormatVersion << "\n" << "fpr,tpr\n";
  for (const auto& p : rep.roc)
    f << bwp::detail::format_double(p.fpr) << ',' << bwp::detail::format_double(p.tpr) << '\n';
}

struct HandoffEvalCommand {
  std::string model, trace, split = "test", plotdata;
  CLI::Option *o_model = nullptr, *o_trace = nullptr, *o_split = nullptr, *o_plot = nullptr;

  void add(CLI::App& app) {
    o_model = app.add_option("--model", model, "Handoff model written by handoff-train");
    o_trace = app.add_option("--trace", trace, "5G trace file");
    o_split = app.add_option("--split", split, "Evaluate the held-out part or every sample")
                  ->check(CLI::IsMember({"test", "all"}));
    o_plot = app.add_option("--plotdata", plotdata, "Directory for ROC / boxplot series files");
  }

  int run(Env& env) {
    Resolver r(env, "handoff-eval");
    const auto model_path = r.get(o_model, model, "model", std::string{});
    const auto trace_path = r.get(o_trace, trace, "trace", std::string{});
    const auto which = r.get(o_split, split, "split", std::string{"test"});
    const auto plot_dir = r.get_optional(o_plot, plotdata, "plotdata");
    env.print_config();
    required_input(model_path, "handoff-eval", "--model");
    required_input(trace_path, "handoff-eval", "--trace");
    require(which == "test" || which == "all", ErrorKind::config, "split must be 'test' or 'all'");

    const auto a = handoff_artifact_from_json(read_json_file(model_path));
    const Trace t = load_trace(trace_path);
    const auto ds = a.dataset(t);
    const auto samples = which == "all" ? ds.samples : a.split_samples(ds).test;
    require(!samples.empty(), ErrorKind::empty_input, "no samples to evaluate");

    Json j = header("bwpredict-report");
    j["report"] = "handoff-eval";
    j["task"] = a.task;
    j["features"] = to_string(a.features);
    j["split"] = which;
    j["samples"] = samples.size();
    env.out << "Handoff " << a.task << " evaluation (features=" << to_string(a.features) << ", split=" << which
            << ", " << samples.size() << " samples)\n";

    if (a.task == "continuous") {
      const auto ev = evaluate_continuous(a.models.at("regressor"), samples);
      j["metrics"] = to_json(ev.report);
      j["boxplot"] = to_json(ev.boxes);
      env.out << std::fixed << std::setprecision(4) << "rho RMSE " << ev.report.rmse << "  MAE " << ev.report.mae
              << "  CORR ";
      if (ev.report.corr)
        env.out << *ev.report.corr;
      else
        env.out << "n/a";
      env.out << "\n" << std::left << std::setw(8) << "rho" << std::setw(8) << "count" << std::setw(10) << "min"
              << std::setw(10) << "q1" << std::setw(10) << "median" << std::setw(10) << "q3" << "max\n";
      for (const auto& [key, b] : ev.boxes)
        env.out << std::left << std::setw(8) << key << std::setw(8) << b.count << std::setw(10) << b.min
                << std::setw(10) << b.q1 << std::setw(10) << b.median << std::setw(10) << b.q3 << b.max << "\n";
      if (plot_dir) {
        auto f = detail::open_output((std::filesystem::path(*plot_dir) / "boxplot.csv").string());
        f << "# format=bwpredict-plotdata version=" << kFormatVersion << "\n" << "rho,count,min,q1,median,q3,max\n";
        for (const auto& [key, b] : ev.boxes)
          f << bwp::detail::format_double(key) << ',' << b.count << ',' << bwp::detail::format_double(b.min) << ','
            << bwp::detail::format_double(b.q1) << ',' << bwp::detail::format_double(b.median) << ','
            << bwp::detail::format_double(b.q3) << ',' << bwp::detail::format_double(b.max) << '\n';
      }
    } else {
      std::vector<std::pair<std::string, ClassificationReport>> cols;
      if (a.task == "binary") {
        cols.emplace_back("unified", evaluate_classifier(a.models.at("unified"), samples));
        const auto d = split_by_direction(samples);
        for (const auto& [name, part] : {std::pair{"5G->4G", &d.from_5g}, std::pair{"4G->5G", &d.from_4g}})
          if (!part->empty()) cols.emplace_back(name, evaluate_classifier(a.models.at("unified"), *part));
      } else {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& s : samples) {
          const auto& m = a.models.at(s.mode == 1 ? "from_5g" : "from_4g");
          scores.push_back(predict_samples(m, {s}).front());
          labels.push_back(s.label > 0.5 ? 1 : 0);
        }
        cols.emplace_back("combined", classification_metrics(scores, labels));
        const auto d = split_by_direction(samples);
        if (!d.from_5g.empty()) cols.emplace_back("5G->4G", evaluate_classifier(a.models.at("from_5g"), d.from_5g));
        if (!d.from_4g.empty()) cols.emplace_back("4G->5G", evaluate_classifier(a.models.at("from_4g"), d.from_4g));
      }
      Json reports = Json::object();
      for (const auto& [name, rep] : cols) reports[name] = to_json(rep);
      j["classification"] = reports;
      env.out << classification_table(cols);
      if (plot_dir)
        for (const auto& [name, rep] : cols) {
          std::string file = name == "5G->4G" ? "from_5g" : name == "4G->5G" ? "from_4g" : name;
          write_roc_csv((std::filesystem::path(*plot_dir) / ("roc_" + file + ".csv")).string(), rep);
        }
    }
    if (!env.out_path.empty()) write_json_file(env.out_path, j);
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// metrics

struct MetricsCommand {
  std::string confusion, csv, task = "classification";
  double threshold = 0.5;
  CLI::Option *o_confusion = nullptr, *o_csv = nullptr, *o_task = nullptr, *o_threshold = nullptr;

  void add(CLI::App& app) {
    o_confusion = app.add_option("--confusion", confusion, "Confusion counts TP,FP,FN,TN");
    o_csv = app.add_option("--csv", csv,
                           "CSV with score,label columns (classification) or prediction,truth (regression)");
    o_task = app.add_option("--task", task, "Kind of CSV input")->check(CLI::IsMember({"classification", "regression"}));
    o_threshold = app.add_option("--threshold", threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  }

  static std::vector<std::pair<double, double>> read_pairs(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open '" + path + "'");
    std::vector<std::pair<double, double>> rows;
    std::string line;
    bool header_seen = false;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (bwp::detail::trim(line).empty() || bwp::detail::trim(line)[0] == '#') continue;
      if (!header_seen) {
        header_seen = true;
        continue;
      }
      const auto cells = bwp::detail::split_csv_line(line);
      require(cells.size() >= 2, ErrorKind::parse, "line " + std::to_string(row) + " needs two columns");
      const auto a = bwp::detail::parse_double(cells[0]);
      const auto b = bwp::detail::parse_double(cells[1]);
      require(a && b, ErrorKind::parse, "line " + std::to_string(row) + " has a non-numeric cell");
      rows.emplace_back(*a, *b);
    }
    require(!rows.empty(), ErrorKind::empty_input, "'" + path + "' has no data rows");
    return rows;
  }

  int run(Env& env) {
    Resolver r(env, "metrics");
    const auto counts = r.get_optional(o_confusion, confusion, "confusion");
    const auto path = r.get_optional(o_csv, csv, "csv");
    const auto kind = r.get(o_task, task, "task", std::string{"classification"});
    const auto thr = r.get(o_threshold, threshold, "threshold", 0.5);
    env.print_config();
    if (counts.has_value() == path.has_value()) throw UsageError("metrics needs exactly one of --confusion or --csv");

    Json j = header("bwpredict-report");
    j["report"] = "metrics";
    if (kind == "regression" && path) {
      std::vector<double> pred, truth;
      for (const auto& [p, t] : read_pairs(*path)) {
        pred.push_back(p);
        truth.push_back(t);
      }
      const auto m = regression_metrics(pred, truth, 0, "input");
      j["regression"] = to_json(m);
      env.out << std::fixed << std::setprecision(4) << "RMSE " << m.rmse << "\nMAE " << m.mae << "\nCORR ";
      if (m.corr)
        env.out << *m.corr << "\n";
      else
        env.out << "n/a\n";
    } else {
      ClassificationReport rep;
      if (counts) {
        const auto items = detail::split_list(*counts);
        require(items.size() == 4, ErrorKind::config, "--confusion takes four counts TP,FP,FN,TN");
        std::vector<std::size_t> v;
        for (const auto& item : items) {
          std::size_t pos = 0;
          long long n = -1;
          try {
            n = std::stoll(item, &pos);
          } catch (const std::exception&) {
            pos = 0;
          }
          require(pos == item.size() && n >= 0, ErrorKind::config, "invalid count '" + item + "'");
          v.push_back(static_cast<std::size_t>(n));
        }
        rep = metrics_from_confusion({v[0], v[1], v[2], v[3]});
      } else {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& [s, l] : read_pairs(*path)) {
          require(l == 0.0 || l == 1.0, ErrorKind::data, "labels must be 0 or 1");
          scores.push_back(s);
          labels.push_back(static_cast<int>(l));
        }
        rep = classification_metrics(scores, labels, thr);
      }
      j["classification"] = to_json(rep);
      env.out << classification_table({{"value", rep}});
    }
    if (!env.out_path.empty()) write_json_file(env.out_path, j);
    return kExitOk;
  }
};

// ---------------------------------------------------------------------------
// dispatch

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Bandwidth and handoff prediction toolkit", "bwpredict"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string config_path, out_path;
  auto* o_seed = app.add_option("--seed", seed, "Seed for every random draw (default 0)");
  auto* o_threads = app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--out", out_path, "Output file or directory");

  IngestCommand ingest;
  SynthCommand synth;
  FeatimpCommand featimp;
  TrainCommand train_cmd;
  PredictCommand predict;
  BenchCommand bench;
  HandoffTrainCommand handoff_train;
  HandoffEvalCommand handoff_eval;
  MetricsCommand metrics;
  ingest.add(*app.add_subcommand("ingest", "Convert a CSV log into a trace file"));
  synth.add(*app.add_subcommand("synth", "Generate a synthetic fixed-route trace"));
  featimp.add(*app.add_subcommand("featimp", "Rank features by forest importance"));
  train_cmd.add(*app.add_subcommand("train", "Train an LSTM or TPA bandwidth model"));
  predict.add(*app.add_subcommand("predict", "Forecast bandwidth with a trained model"));
  bench.add(*app.add_subcommand("bench", "Compare all predictors across horizons"));
  handoff_train.add(*app.add_subcommand("handoff-train", "Train a 4G/5G handoff model"));
  handoff_eval.add(*app.add_subcommand("handoff-eval", "Evaluate a handoff model"));
  metrics.add(*app.add_subcommand("metrics", "Compute classification or regression metrics"));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << detail::error_line("usage", e.what()) << "\n";
    return kExitUsage;
  }

  try {
    Env env{out, err};
    if (!config_path.empty()) env.config = detail::load_config(config_path);
    if (env.config.contains("seed")) {
      env.seed = detail::config_value<std::uint64_t>(env.config.at("seed"), "seed");
      env.seed_given = true;
    }
    if (env.config.contains("threads")) env.threads = detail::config_value<std::size_t>(env.config.at("threads"), "threads");
    if (o_seed->count() > 0) {
      env.seed = seed;
      env.seed_given = true;
    }
    if (o_threads->count() > 0) env.threads = threads;
    env.out_path = out_path;
    if (!config_path.empty()) env.resolved["config"] = config_path;

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "ingest") return ingest.run(env);
    if (name == "synth") return synth.run(env);
    if (name == "featimp") return featimp.run(env);
    if (name == "train") return train_cmd.run(env);
    if (name == "predict") return predict.run(env);
    if (name == "bench") return bench.run(env);
    if (name == "handoff-train") return handoff_train.run(env);
    if (name == "handoff-eval") return handoff_eval.run(env);
    return metrics.run(env);
  } catch (const UsageError& e) {
    err << detail::error_line("usage", e.what()) << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << detail::error_line(to_string(e.kind()), e.what()) << "\n";
    return kExitFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    err << detail::error_line("io", e.what()) << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << detail::error_line("internal", e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace bwp::cli
