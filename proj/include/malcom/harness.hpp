// Copyright 2026 The malcom-psgd Authors. All Rights Reserved.
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
// =============================================================================

// Experiment orchestration: JSON config, end-to-end runs with metrics
// persistence, codec comparison at an objective cut-off, and per-round rate
// diagnostics.
//
// metrics.csv columns, in this order:
//   round, objective_total, smooth_part, l1_part, consensus_sq,
//   proj_grad_sq, bits_this_round, cum_bits, test_metric
// Reals are printed with %.17g; a metric not computed that round is an
// empty field. A run that fails part way ends the file with "# error: ...".

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "malcom/codec.hpp"
#include "malcom/csv.hpp"
#include "malcom/error.hpp"
#include "malcom/log.hpp"
#include "malcom/optimizer.hpp"
#include "malcom/protocol.hpp"
#include "malcom/tasks.hpp"
#include "malcom/topology.hpp"

namespace malcom {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  // task
  std::string task = "logistic";  // logistic | mlp
  std::string data = "synthetic";  // synthetic | csv
  std::filesystem::path csv_path;
  std::size_t samples = 5000;
  std::size_t features = 200;
  double sparsity = 0.1;
  std::size_t hidden = 16;
  std::size_t classes = 3;
  double test_fraction = 0.0;

  // network
  std::string topology = "ring10";  // ring10 | ring | complete | csv
  std::filesystem::path topology_csv;
  std::size_t n_nodes = 10;

  HyperParams hp;
  std::optional<std::uint64_t> seed;
  std::size_t metric_every = 50;
  std::size_t objective_subsample = 0;
  CodecKind codec = CodecKind::kMalcom;
  std::size_t threads = 1;

  // outputs
  std::filesystem::path output;  // run directory; empty keeps results in memory
  std::filesystem::path message_log;

  // compare
  std::optional<double> cutoff;
  double cutoff_factor = 1.05;

  std::uint64_t seed_value() const {
    if (!seed) throw ConfigError("seed is mandatory");
    return *seed;
  }

  void check() const {
    if (task != "logistic" && task != "mlp") throw ConfigError("unknown task '" + task + "'");
    if (data != "synthetic" && data != "csv") throw ConfigError("unknown data source '" + data + "'");
    if (data == "csv" && csv_path.empty()) throw ConfigError("data 'csv' needs csv_path");
    if (data == "synthetic" && (samples == 0 || features == 0))
      throw ConfigError("samples and features must be >= 1");
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw ConfigError("sparsity must be in [0, 1]");
    if (task == "mlp" && (hidden == 0 || classes < 2))
      throw ConfigError("mlp needs hidden >= 1 and classes >= 2");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0))
      throw ConfigError("test_fraction must be in [0, 1)");
    if (topology != "ring10" && topology != "ring" && topology != "complete" && topology != "csv")
      throw ConfigError("unknown topology '" + topology + "'");
    if (topology == "csv" && topology_csv.empty())
      throw ConfigError("topology 'csv' needs topology_csv");
    if (topology == "ring10" && n_nodes != 10) throw ConfigError("ring10 has exactly 10 nodes");
    if (n_nodes == 0) throw ConfigError("n_nodes must be >= 1");
    hp.check();
    seed_value();
    if (threads == 0) throw ConfigError("threads must be >= 1");
    if (!message_log.empty() && codec == CodecKind::kNone)
      throw ConfigError("message_log needs a coded codec");
    if (cutoff && !std::isfinite(*cutoff)) throw ConfigError("cutoff must be finite");
    if (!(cutoff_factor >= 1.0)) throw ConfigError("cutoff_factor must be >= 1");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["task"] = task;
    j["data"] = data;
    if (!csv_path.empty()) j["csv_path"] = csv_path.string();
    j["samples"] = samples;
    j["features"] = features;
    j["sparsity"] = sparsity;
    j["hidden"] = hidden;
    j["classes"] = classes;
    j["test_fraction"] = test_fraction;
    j["topology"] = topology;
    if (!topology_csv.empty()) j["topology_csv"] = topology_csv.string();
    j["n_nodes"] = n_nodes;
    j["eta"] = hp.eta;
    j["mu"] = hp.mu;
    j["gamma"] = hp.gamma;
    j["levels"] = hp.levels;
    j["rounds"] = hp.rounds;
    j["batch_size"] = hp.batch_size;
    if (seed) j["seed"] = *seed;
    j["metric_every"] = metric_every;
    j["objective_subsample"] = objective_subsample;
    j["codec"] = std::string(to_string(codec));
    j["threads"] = threads;
    if (!output.empty()) j["output"] = output.string();
    if (!message_log.empty()) j["message_log"] = message_log.string();
    if (cutoff) j["cutoff"] = *cutoff;
    j["cutoff_factor"] = cutoff_factor;
    return j;
  }

  // Relative file paths are resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> kKeys = {
        "task",     "data",         "csv_path",     "samples",     "features",
        "sparsity", "hidden",       "classes",      "test_fraction", "topology",
        "topology_csv", "n_nodes",  "eta",          "mu",          "gamma",
        "levels",   "rounds",       "batch_size",   "seed",        "metric_every",
        "objective_subsample", "codec", "threads",  "output",      "message_log",
        "cutoff",   "cutoff_factor"};
    for (const auto& [key, _] : j.items()) {
      if (!kKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    ExperimentConfig c;
    auto get = [&](const char* key, auto& out) {
      if (!j.contains(key)) return;
      try {
        j.at(key).get_to(out);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
      }
    };
    auto get_path = [&](const char* key, std::filesystem::path& out) {
      std::string s;
      get(key, s);
      if (s.empty()) return;
      out = s;
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
    };
    auto get_count = [&](const char* key, std::size_t& out) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number_unsigned())
        throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
      out = j.at(key).get<std::size_t>();
    };
    get("task", c.task);
    get("data", c.data);
    get_path("csv_path", c.csv_path);
    get_count("samples", c.samples);
    get_count("features", c.features);
    get("sparsity", c.sparsity);
    get_count("hidden", c.hidden);
    get_count("classes", c.classes);
    get("test_fraction", c.test_fraction);
    get("topology", c.topology);
    get_path("topology_csv", c.topology_csv);
    get_count("n_nodes", c.n_nodes);
    get("eta", c.hp.eta);
    get("mu", c.hp.mu);
    get("gamma", c.hp.gamma);
    std::size_t levels = c.hp.levels;
    get_count("levels", levels);
    if (levels > kMaxLevels) throw ConfigError("levels must be in [2, 65535]");
    c.hp.levels = static_cast<std::uint32_t>(levels);
    get_count("rounds", c.hp.rounds);
    get_count("batch_size", c.hp.batch_size);
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned())
        throw ConfigError("config key 'seed' must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    get_count("metric_every", c.metric_every);
    get_count("objective_subsample", c.objective_subsample);
    if (j.contains("codec")) {
      std::string codec;
      get("codec", codec);
      c.codec = parse_codec(codec);
    }
    get_count("threads", c.threads);
    get_path("output", c.output);
    get_path("message_log", c.message_log);
    if (j.contains("cutoff")) {
      double v = 0.0;
      get("cutoff", v);
      c.cutoff = v;
    }
    get("cutoff_factor", c.cutoff_factor);
    return c;
  }

  static ExperimentConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
  }
};

// ---------------------------------------------------------------------------
// RunSetup: task, topology and data shards derived from a config

struct RunSetup {
  Task task = Task::logistic(1);
  Topology topology;
  std::vector<Dataset> shards;
  std::optional<Dataset> test_set;
};

inline Topology make_config_topology(const ExperimentConfig& c) {
  if (c.topology == "ring10") return build_ring(10);
  if (c.topology == "ring") return build_ring(c.n_nodes);
  if (c.topology == "complete") return build_fully_connected(c.n_nodes);
  Topology t = load_topology_csv(c.topology_csv);
  if (t.n != c.n_nodes)
    throw ConfigError("topology_csv has " + std::to_string(t.n) + " nodes, n_nodes is " +
                      std::to_string(c.n_nodes));
  return t;
}

inline RunSetup prepare(const ExperimentConfig& c) {
  c.check();
  const std::uint64_t seed = c.seed_value();
  RunSetup s;
  try {
    s.topology = make_config_topology(c);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }

  Dataset all;
  try {
    if (c.data == "csv") {
      all = load_csv(c.csv_path);
    } else if (c.task == "logistic") {
      all = synth_logistic(seed, c.samples, c.features, c.sparsity);
    } else {
      all = synth_multiclass(seed, c.samples, c.features, c.classes);
    }
  } catch (const Error& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }

  if (c.task == "logistic") {
    s.task = Task::logistic(all.features_dim);
    for (double y : all.labels)
      if (y != 1.0 && y != -1.0) throw ConfigError("logistic labels must be +1 or -1");
  } else {
    s.task = Task::mlp({all.features_dim, c.hidden, c.classes});
    for (double y : all.labels)
      if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(c.classes))
        throw ConfigError("mlp labels must be class indices below 'classes'");
  }

  // Held-out rows come from the front of a seeded shuffle.
  std::vector<Dataset> split = partition(all, 1, seed);
  Dataset shuffled = std::move(split.front());
  const std::size_t n_test =
      static_cast<std::size_t>(std::floor(c.test_fraction * static_cast<double>(all.size())));
  if (n_test > 0) {
    std::vector<std::size_t> test_rows(n_test), train_rows(shuffled.size() - n_test);
    std::iota(test_rows.begin(), test_rows.end(), std::size_t{0});
    std::iota(train_rows.begin(), train_rows.end(), n_test);
    s.test_set = shuffled.subset(test_rows, all.name + "/test");
    shuffled = shuffled.subset(train_rows, all.name + "/train");
  }
  if (shuffled.size() < c.n_nodes)
    throw ConfigError("fewer training rows (" + std::to_string(shuffled.size()) + ") than nodes");
  s.shards = partition(shuffled, c.n_nodes, seed + 1);
  return s;
}

inline EngineOptions engine_options(const ExperimentConfig& c) {
  EngineOptions o;
  o.hp = c.hp;
  o.codec = c.codec;
  o.seed = c.seed_value();
  o.threads = c.threads;
  o.metric_every = c.metric_every;
  o.objective_subsample = c.objective_subsample;
  return o;
}

// ---------------------------------------------------------------------------
// Metrics CSV

inline constexpr const char* kMetricsHeader =
    "round,objective_total,smooth_part,l1_part,consensus_sq,proj_grad_sq,bits_this_round,"
    "cum_bits,test_metric";

inline std::string format_real(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_row(const RoundMetrics& m) {
  std::string s = std::to_string(m.round);
  for (double v : {m.objective_total, m.smooth_part, m.l1_part, m.consensus_sq, m.proj_grad_sq})
    s += "," + format_real(v);
  s += "," + std::to_string(m.bits_this_round) + "," + std::to_string(m.cum_bits) + "," +
       format_real(m.test_metric);
  return s;
}

struct MetricsFile {
  std::vector<RoundMetrics> rows;
  std::string error;  // text of the error trailer, empty if none
};

inline MetricsFile read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  MetricsFile f;
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw Error(path.string() + ": unexpected header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# error: ", 0) == 0) {
      f.error = line.substr(9);
      continue;
    }
    const auto cells = csv::split(line);
    if (cells.size() != 9)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns");
    auto real = [&](std::size_t k) {
      if (cells[k].empty()) return std::numeric_limits<double>::quiet_NaN();
      double v = 0.0;
      if (!csv::parse_double(cells[k], v))
        throw Error(path.string() + ":" + std::to_string(line_no) + ": bad number");
      return v;
    };
    RoundMetrics m;
    m.round = static_cast<std::size_t>(real(0));
    m.objective_total = real(1);
    m.smooth_part = real(2);
    m.l1_part = real(3);
    m.consensus_sq = real(4);
    m.proj_grad_sq = real(5);
    m.bits_this_round = std::stoull(std::string(cells[6]));
    m.cum_bits = std::stoull(std::string(cells[7]));
    m.test_metric = real(8);
    f.rows.push_back(m);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Runs

// Node-averaged coding statistics of one round.
struct RateSample {
  std::size_t round = 0;
  double bits_per_coord = 0.0;  // payload bits / d
  double type_bound = 0.0;       // bit_bound of the type vector, bits / coordinate
  double rho_hat = 0.0;         // mean |residual entry|
};

struct RunSummary {
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  double final_consensus_sq = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t total_bits = 0;
  double wall_seconds = 0.0;
  std::size_t rounds_completed = 0;
  double max_average_drift = 0.0;
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["final_objective"] = std::isnan(final_objective) ? nlohmann::json() : nlohmann::json(final_objective);
    j["final_consensus_sq"] =
        std::isnan(final_consensus_sq) ? nlohmann::json() : nlohmann::json(final_consensus_sq);
    j["total_bits"] = total_bits;
    j["wall_seconds"] = wall_seconds;
    j["rounds_completed"] = rounds_completed;
    j["max_average_drift"] = max_average_drift;
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct RunArtifact {
  ExperimentConfig config;
  std::size_t dim = 0;
  std::filesystem::path metrics_csv, config_json, summary_json;  // empty when not written
  std::vector<RoundMetrics> rows;
  std::vector<RateSample> rates;  // empty for codec none
  RunSummary summary;

  std::vector<std::uint64_t> bits_ledger() const {
    std::vector<std::uint64_t> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.bits_this_round);
    return out;
  }
};

// Thrown by run() after the partial artifact has been written.
class RunFailure : public Error {
 public:
  RunFailure(const std::string& what, RunArtifact partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunArtifact& partial() const noexcept { return partial_; }

 private:
  RunArtifact partial_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Runs the protocol end to end. With `config.output` set, writes
/// metrics.csv, config.json and summary.json into that directory.
/// Config problems throw ConfigError before any round is executed.
inline RunArtifact run(const ExperimentConfig& config, const RunSetup* prepared = nullptr) {
  std::optional<RunSetup> own;
  if (!prepared) own = prepare(config);
  const RunSetup& setup = prepared ? *prepared : *own;

  RunArtifact art;
  art.config = config;
  art.dim = setup.task.dim();

  std::ofstream csv_out;
  if (!config.output.empty()) {
    std::filesystem::create_directories(config.output);
    art.metrics_csv = config.output / "metrics.csv";
    art.config_json = config.output / "config.json";
    art.summary_json = config.output / "summary.json";
    write_json(art.config_json, config.to_json());
    csv_out.open(art.metrics_csv);
    if (!csv_out) throw Error("cannot write " + art.metrics_csv.string());
    csv_out << kMetricsHeader << '\n';
  }

  Engine engine(setup.task, setup.topology, setup.shards, engine_options(config),
                setup.test_set);
  std::optional<MessageLogWriter> log_writer;
  if (!config.message_log.empty()) {
    log_writer.emplace(config.message_log, config.codec);
    engine.set_message_sink(
        [&](std::uint64_t round, const Packet& p) { log_writer->write(round, p); });
  }

  log(LogLevel::kInfo, "run: task " + config.task + ", topology " + setup.topology.name +
                           ", d = " + std::to_string(art.dim) + ", codec " +
                           std::string(to_string(config.codec)));
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    art.summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    art.summary.rounds_completed = art.rows.size();
    if (!art.rows.empty()) {
      art.summary.final_objective = art.rows.back().objective_total;
      art.summary.final_consensus_sq = art.rows.back().consensus_sq;
      art.summary.total_bits = art.rows.back().cum_bits;
    }
    if (csv_out.is_open()) {
      if (!art.summary.error.empty()) csv_out << "# error: " << art.summary.error << '\n';
      csv_out.flush();
      write_json(art.summary_json, art.summary.to_json());
    }
    if (log_writer) log_writer->flush();
  };

  try {
    for (std::size_t t = 0; t < config.hp.rounds; ++t) {
      const RoundMetrics m = engine.run_round();
      art.rows.push_back(m);
      art.summary.max_average_drift =
          std::max(art.summary.max_average_drift, engine.last_average_drift());
      if (config.codec != CodecKind::kNone) {
        RateSample r;
        r.round = m.round;
        const auto out = engine.last_outgoing();
        for (const Outgoing& o : out) {
          r.bits_per_coord += static_cast<double>(o.stats.payload_bits);
          r.type_bound += o.stats.type_bound_per_coord;
          r.rho_hat += o.stats.rho_hat;
        }
        const double n = static_cast<double>(out.size());
        r.bits_per_coord /= n * static_cast<double>(art.dim);
        r.type_bound /= n;
        r.rho_hat /= n;
        art.rates.push_back(r);
      }
      if (csv_out.is_open()) csv_out << metrics_row(m) << '\n';
      if (log_level() >= LogLevel::kDebug || (t + 1) % 100 == 0)
        log(LogLevel::kInfo, "round " + std::to_string(t) + " objective " +
                                 format_real(m.objective_total) + " consensus " +
                                 format_real(m.consensus_sq));
    }
  } catch (const std::exception& e) {
    art.summary.error = e.what();
    finish();
    throw RunFailure(e.what(), std::move(art));
  }
  finish();
  return art;
}

// ---------------------------------------------------------------------------
// Codec comparison at an objective cut-off

struct CodecResult {
  CodecKind codec = CodecKind::kMalcom;
  bool reached = false;
  std::size_t round_reached = 0;     // first round with objective <= cutoff
  std::uint64_t bits_at_cutoff = 0;  // cum_bits at that round, or at T if not reached
  std::uint64_t total_bits = 0;
  double final_objective = 0.0;
};

struct CompareReport {
  double cutoff = 0.0;
  double reference_objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<CodecResult> results;  // malcom, per_entry_baseline, none

  const CodecResult& at(CodecKind c) const {
    for (const auto& r : results)
      if (r.codec == c) return r;
    throw Error("compare: codec not in report");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["cutoff"] = cutoff;
    j["reference_objective"] =
        std::isnan(reference_objective) ? nlohmann::json() : nlohmann::json(reference_objective);
    for (const auto& r : results) {
      nlohmann::json row;
      row["codec"] = std::string(to_string(r.codec));
      row["reached"] = r.reached;
      row["round_reached"] = r.reached ? nlohmann::json(r.round_reached) : nlohmann::json();
      row["bits_at_cutoff"] = r.bits_at_cutoff;
      row["total_bits"] = r.total_bits;
      row["final_objective"] = r.final_objective;
      j["results"].push_back(row);
    }
    return j;
  }
};

inline CodecResult summarize_at_cutoff(const RunArtifact& art, double cutoff) {
  CodecResult r;
  r.codec = art.config.codec;
  r.total_bits = art.summary.total_bits;
  r.final_objective = art.summary.final_objective;
  r.bits_at_cutoff = r.total_bits;
  for (const auto& m : art.rows) {
    if (m.objective_total <= cutoff) {
      r.reached = true;
      r.round_reached = m.round;
      r.bits_at_cutoff = m.cum_bits;
      break;
    }
  }
  return r;
}

/// Objective of centralized proximal GD on the pooled shards, started from
/// the same initial model.
inline ReferenceSolution reference_solution(const ExperimentConfig& config, const RunSetup& setup) {
  return centralized_proximal_gd(setup.task, setup.shards, config.hp.mu,
                                 setup.task.initial_params(config.seed_value()));
}

/// Runs the same seed and task under every codec. The cut-off is
/// `config.cutoff` when given, else cutoff_factor times the centralized
/// reference objective. Per-codec outputs go to <output>/<codec>.
inline CompareReport compare_codecs(const ExperimentConfig& config) {
  const RunSetup setup = prepare(config);
  CompareReport report;
  if (config.cutoff) {
    report.cutoff = *config.cutoff;
  } else {
    const ReferenceSolution ref = reference_solution(config, setup);
    if (!ref.converged) log(LogLevel::kWarn, "compare: reference run did not reach tolerance");
    report.reference_objective = ref.objective;
    report.cutoff = config.cutoff_factor * ref.objective;
  }
  for (CodecKind codec : {CodecKind::kMalcom, CodecKind::kPerEntryBaseline, CodecKind::kNone}) {
    ExperimentConfig c = config;
    c.codec = codec;
    c.message_log.clear();
    if (!config.output.empty()) c.output = config.output / std::string(to_string(codec));
    const RunArtifact art = run(c, &setup);
    report.results.push_back(summarize_at_cutoff(art, report.cutoff));
    if (!report.results.back().reached)
      log(LogLevel::kWarn, "compare: " + std::string(to_string(codec)) +
                               " never reached the cut-off; reporting bits at T");
  }
  if (!config.output.empty()) write_json(config.output / "compare.json", report.to_json());
  return report;
}

// ---------------------------------------------------------------------------
// Rate diagnostics

struct RateDiagnostic {
  std::size_t round = 0;
  double empirical_bits_per_coord = 0.0;
  double type_bound = 0.0;
  double rho_hat = 0.0;
  double laplace_bound = std::numeric_limits<double>::quiet_NaN();  // NaN when rho_hat = 0
};

/// Per-round series of measured payload bits, the type-vector bound and the
/// Laplace-model bound at the fitted rho with range 2 rho ln(100 d).
inline std::vector<RateDiagnostic> rate_diagnostics(const RunArtifact& art) {
  if (art.config.codec == CodecKind::kNone)
    throw Error("rate_diagnostics: run used the uncompressed codec");
  std::vector<RateDiagnostic> out;
  out.reserve(art.rates.size());
  for (const RateSample& s : art.rates) {
    RateDiagnostic d;
    d.round = s.round;
    d.empirical_bits_per_coord = s.bits_per_coord;
    d.type_bound = s.type_bound;
    d.rho_hat = s.rho_hat;
    if (s.rho_hat > 0.0) {
      LaplaceRateModel model;
      model.rho = s.rho_hat;
      model.range_r = adaptive_range_rule(s.rho_hat, static_cast<double>(art.dim), 0.01);
      model.levels_count = art.config.hp.levels;
      d.laplace_bound = laplace_rate_bound(model);
    }
    out.push_back(d);
  }
  return out;
}

inline void write_rate_csv(const std::filesystem::path& path,
                           const std::vector<RateDiagnostic>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "round,empirical_bits_per_coord,type_bound,rho_hat,laplace_bound\n";
  for (const auto& r : rows)
    out << r.round << ',' << format_real(r.empirical_bits_per_coord) << ','
        << format_real(r.type_bound) << ',' << format_real(r.rho_hat) << ','
        << format_real(r.laplace_bound) << '\n';
}

/// Mean absolute value: the maximum-likelihood Laplace scale for a
/// zero-mean sample.
inline double fit_laplace_rho(std::span<const double> sample) {
  if (sample.empty()) throw Error("fit_laplace_rho: empty sample");
  double s = 0.0;
  for (double v : sample) s += std::abs(v);
  return s / static_cast<double>(sample.size());
}

}  // namespace malcom
