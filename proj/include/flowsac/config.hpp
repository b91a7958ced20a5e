#pragma once

#include <cstdint>
#include <string>

#include "flowsac/flow_matching.hpp"
#include "flowsac/lqr.hpp"
#include "flowsac/sac.hpp"

namespace flowsac {

// Run configuration, read from a strict JSON file: unknown keys anywhere in
// the document are errors naming the key, so typos cannot silently fall back
// to defaults.  The "system" entry is either a preset name ("scalar",
// "quickstart", "paper_eq12") or an object with explicit row-major matrices.

struct EvaluateProtocol {
  std::size_t n_trajectories = 50;
  std::size_t trajectory_length = 100;
  std::size_t n_action_samples = 12800;
};

struct TrainConfig {
  LqrSystem system;
  SacConfig sac;
  EvaluateProtocol evaluate;
  IsfmBenchConfig isfm_bench;
  std::uint64_t seed = 0;
  std::string out_dir;  // may be empty; the command line can supply it
};

// Parse from JSON text; `where` names the source in error messages.
TrainConfig parse_config(const std::string& text, const std::string& where);

// Read and parse a config file.  Missing files raise io_error; malformed
// content raises std::invalid_argument naming the offending key.
TrainConfig load_config(const std::string& path);

// The named system presets, also used directly by tests.
LqrSystem preset_system(const std::string& name);

}  // namespace flowsac
