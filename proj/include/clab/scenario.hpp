#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "clab/sched.hpp"

namespace clab {

// A fully assembled run configuration: partition, Hamiltonian, initial
// state, and schedule, parsed from a JSON scenario file.
struct Scenario {
  std::string name;
  TensorPartition partition;
  OperatorMatrix H;
  StateVector initial;
  ScheduleConfig schedule;
  std::uint64_t n_traj = 1;
  int sample_cap = 16;
  std::string out_dir = "out";
  int solve_subsystem = 0;  // subject of the solve-basis subcommand
};

// Parses and validates eagerly; every violated invariant is collected and
// reported at once (ValidationError), with JSON paths naming the offending
// fields.  Malformed JSON surfaces the parser's positional message.
Scenario parse_scenario(const std::string& path);
Scenario parse_scenario_json(const nlohmann::json& j,
                             const std::string& origin = "<inline>");

}  // namespace clab
