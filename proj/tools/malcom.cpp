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

// Command-line front end: run | compare | diagnose.
// On failure prints one line "error: <kind>: <message>" to stderr and exits
// nonzero (2 for config errors, 1 otherwise).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "malcom/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

malcom::ExperimentConfig load(const Flags& f) {
  auto c = malcom::ExperimentConfig::from_file(f.config);
  if (!f.out.empty()) c.output = f.out;
  if (f.seed) c.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  return c;
}

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory (overrides 'output')");
  cmd->add_option("--seed", f.seed, "seed (overrides 'seed')");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

int cmd_run(const Flags& f) {
  const auto art = malcom::run(load(f));
  nlohmann::json j = art.summary.to_json();
  if (!art.metrics_csv.empty()) j["metrics_csv"] = art.metrics_csv.string();
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_compare(const Flags& f) {
  const auto report = malcom::compare_codecs(load(f));
  std::cout << report.to_json().dump(2) << '\n';
  return 0;
}

int cmd_diagnose(const Flags& f) {
  auto c = load(f);
  if (c.codec == malcom::CodecKind::kNone) c.codec = malcom::CodecKind::kMalcom;
  const auto art = malcom::run(c);
  const auto rows = malcom::rate_diagnostics(art);
  if (!c.output.empty()) {
    const auto path = c.output / "rate.csv";
    malcom::write_rate_csv(path, rows);
    std::cout << path.string() << '\n';
  } else {
    std::cout << "round,empirical_bits_per_coord,type_bound,rho_hat,laplace_bound\n";
    for (const auto& r : rows)
      std::cout << r.round << ',' << malcom::format_real(r.empirical_bits_per_coord) << ','
                << malcom::format_real(r.type_bound) << ',' << malcom::format_real(r.rho_hat)
                << ',' << malcom::format_real(r.laplace_bound) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"malcom: decentralized proximal SGD with compressed gossip"};
  app.require_subcommand(1);
  Flags flags;
  auto* run = app.add_subcommand("run", "run one experiment");
  auto* compare = app.add_subcommand("compare", "bits to the objective cut-off for every codec");
  auto* diagnose = app.add_subcommand("diagnose", "per-round coding rate against its bounds");
  for (auto* cmd : {run, compare, diagnose}) add_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(flags);
    if (compare->parsed()) return cmd_compare(flags);
    return cmd_diagnose(flags);
  } catch (const malcom::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << '\n';
    return 1;
  }
}
