// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver for the pipeline stages. Talks to the library only
// through the C interface.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlpf/rlpf.h"

namespace {

int report_error(rlpf_status st, const char* message) {
  std::fprintf(stderr, "error: category=%s message=%s\n", rlpf_status_name(st), message);
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RLPF desk: simulated marketplace, reward models, PPO and the A/B analysis"};
  app.set_version_flag("--version", std::string(rlpf_version()));

  std::string config;
  std::uint64_t seed = 42;
  std::string workdir = "rlpf_run";
  bool quiet = false;
  app.add_option("-c,--config", config, "Config file (default: $RLPF_CONFIG)");
  app.add_option("-s,--seed", seed, "Root seed")->capture_default_str();
  app.add_option("-w,--workdir", workdir, "Directory for artifacts and the run manifest")->capture_default_str();
  app.add_flag("-q,--quiet", quiet, "Only print errors");
  app.require_subcommand(1, 1);

  const std::vector<std::pair<const char*, const char*>> stages = {
      {"simulate", "Generate the marketplace and the multitext era log"},
      {"build-data", "Filter the log into preference pairs and pointwise rows, split by advertiser"},
      {"train-sft", "Fit the imitation policy used as the control arm"},
      {"train-rm", "Fit the training and evaluation reward models"},
      {"train-rlpf", "Run PPO against the reward model and select a checkpoint"},
      {"abtest", "Simulate the advertiser-randomized field test"},
      {"analyze", "Fit the regression battery and the balance table"},
      {"report", "Assemble the final report"},
      {"pipeline", "Run every stage in order"}};
  for (const auto& [name, help] : stages) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(RLPF_ERR_CONFIG);
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  rlpf_session* session = nullptr;
  rlpf_status st = rlpf_session_open(config.empty() ? nullptr : config.c_str(), seed, workdir.c_str(), &session);
  if (st != RLPF_OK) return report_error(st, rlpf_last_error());

  int wrote = 0;
  st = rlpf_run_stage(session, stage.c_str(), &wrote);
  if (st != RLPF_OK) {
    const int code = report_error(st, rlpf_session_last_error(session));
    rlpf_session_close(session);
    return code;
  }
  if (!quiet)
    std::printf("%s: %s (config %s, seed %llu, workdir %s)\n", stage.c_str(), wrote ? "done" : "up to date",
                rlpf_session_config_hash(session), static_cast<unsigned long long>(seed), workdir.c_str());
  rlpf_session_close(session);
  return 0;
}
