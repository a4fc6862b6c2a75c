#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "clab/scenario.hpp"

using clab::cdouble;
using clab::Scenario;
using clab::ValidationError;
using nlohmann::json;

namespace {

// Minimal well-formed scenario; tests mutate copies of it.
json base_scenario() {
  return json{
      {"name", "unit"},
      {"dims", {2, 2}},
      {"hamiltonian",
       {{{"kind", "diagonal"}, {"subsystem", 0}, {"values", {0.35, -0.2}}},
        {{"kind", "diagonal"}, {"subsystem", 1}, {"values", {0.15, -0.3}}},
        {{"kind", "position_coupling"},
         {"subsystem_a", 0},
         {"subsystem_b", 1},
         {"strength", 0.4}}}},
      {"initial",
       {{"product", {{{0.8, 0.0}, {0.6, 0.0}}, {{0.6, 0.0}, {0.0, 0.8}}}}}},
      {"window", {{"T", 1.0}, {"eta", 3e-3}}},
      {"schedule",
       {{"n_half_cycles", 2},
        {"seed", 7},
        {"policy", {{"theta", 1.0}, {"enabled", {0}}}},
        {"pinned_basis",
         {{{"subsystem", 0},
           {"columns", {{{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 0.0}, {1.0, 0.0}}}}}}}}},
      {"trajectories", 2}};
}

bool has_issue(const ValidationError& e, const std::string& needle) {
  return std::any_of(e.issues.begin(), e.issues.end(),
                     [&](const std::string& s) {
                       return s.find(needle) != std::string::npos;
                     });
}

// Expects parsing to fail and the issue list to mention every needle.
template <typename... N>
void expect_issues(const json& j, N... needles) {
  try {
    (void)clab::parse_scenario_json(j, "s");
    FAIL_CHECK("expected ValidationError");
  } catch (const ValidationError& e) {
    const auto check_one = [&](const std::string& needle) {
      CHECK_MESSAGE(has_issue(e, needle),
                    "missing issue containing '" << needle << "'");
    };
    (check_one(needles), ...);
  }
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("the base scenario assembles the expected operator") {
  const Scenario sc = clab::parse_scenario_json(base_scenario());
  CHECK(sc.name == "unit");
  CHECK(sc.partition.total_dim == 4);
  CHECK(sc.n_traj == 2);
  CHECK(sc.schedule.n_half_cycles == 2);
  CHECK(sc.schedule.seed == 7);
  REQUIRE(sc.schedule.pinned.size() == 1);
  CHECK(sc.schedule.pinned[0].subsystem == 0);

  // Diagonal embeddings plus the position coupling, all on the diagonal.
  const double za[2] = {0.35, -0.2}, zb[2] = {0.15, -0.3};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const std::size_t i = static_cast<std::size_t>(a) * 2 + b;
      const double want = za[a] + zb[b] + 0.4 * a * b;
      CHECK(std::abs(sc.H.at(i, i) - cdouble{want}) <= 1e-15);
      for (std::size_t q = 0; q < 4; ++q)
        if (q != i) CHECK(sc.H.at(i, q) == cdouble{0.0});
    }

  // The product initial state is already normalized here.
  CHECK(std::abs(sc.initial.amps[0] - cdouble{0.48}) <= 1e-15);
  CHECK(std::abs(sc.initial.amps[1] - cdouble{0.0, 0.64}) <= 1e-15);
  CHECK(std::abs(sc.initial.amps[2] - cdouble{0.36}) <= 1e-15);
  CHECK(std::abs(sc.initial.amps[3] - cdouble{0.0, 0.48}) <= 1e-15);
  CHECK(sc.initial.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pauli chain and dense terms build the documented matrices") {
  json j = base_scenario();
  j["hamiltonian"] = json::array(
      {{{"kind", "pauli_chain"}, {"strength", 0.7}}});
  const Scenario sc = clab::parse_scenario_json(j);
  // 0.7 (sz x I + I x sz + sx x sx) on two qubits.
  CHECK(std::abs(sc.H.at(0, 0) - cdouble{1.4}) <= 1e-15);
  CHECK(std::abs(sc.H.at(3, 3) - cdouble{-1.4}) <= 1e-15);
  CHECK(sc.H.at(1, 1) == cdouble{0.0});
  CHECK(sc.H.at(2, 2) == cdouble{0.0});
  CHECK(std::abs(sc.H.at(0, 3) - cdouble{0.7}) <= 1e-15);
  CHECK(std::abs(sc.H.at(1, 2) - cdouble{0.7}) <= 1e-15);
  CHECK(sc.H.at(0, 1) == cdouble{0.0});

  json d = base_scenario();
  d["dims"] = {2};
  d["initial"] = {{"dense", {{1.0, 0.0}, {0.0, 0.0}}}};
  d["hamiltonian"] = json::array(
      {{{"kind", "dense"},
        {"matrix",
         {{{0.1, 0.0}, {0.0, -0.2}}, {{0.0, 0.2}, {-0.1, 0.0}}}}},
       {{"kind", "diagonal"}, {"subsystem", 0}, {"values", {1.0, 2.0}}}});
  d["schedule"]["pinned_basis"][0]["columns"] = {{{1.0, 0.0}, {0.0, 0.0}},
                                                 {{0.0, 0.0}, {1.0, 0.0}}};
  const Scenario sd = clab::parse_scenario_json(d);
  CHECK(std::abs(sd.H.at(0, 0) - cdouble{1.1}) <= 1e-15);
  CHECK(std::abs(sd.H.at(1, 1) - cdouble{1.9}) <= 1e-15);
  CHECK(std::abs(sd.H.at(0, 1) - cdouble{0.0, -0.2}) <= 1e-15);
  CHECK(std::abs(sd.H.at(1, 0) - cdouble{0.0, 0.2}) <= 1e-15);
}

TEST_CASE("position coupling multiplies the site indices") {
  json j = base_scenario();
  j["dims"] = {3, 2};
  j["initial"] = {{"product",
                   {{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}},
                    {{1.0, 0.0}, {0.0, 0.0}}}}};
  j["hamiltonian"] = json::array({{{"kind", "position_coupling"},
                                   {"subsystem_a", 0},
                                   {"subsystem_b", 1},
                                   {"strength", 2.0}}});
  j["schedule"]["pinned_basis"] = json::array();
  j["schedule"]["policy"]["enabled"] = {1};
  const Scenario sc = clab::parse_scenario_json(j);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 2; ++k) {
      const std::size_t r = static_cast<std::size_t>(i) * 2 + k;
      CHECK(std::abs(sc.H.at(r, r) - cdouble{2.0 * i * k}) <= 1e-15);
    }
}

TEST_CASE("unnormalized dense initial states are normalized on load") {
  json j = base_scenario();
  j["initial"] = {{"dense",
                   {{2.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}}};
  const Scenario sc = clab::parse_scenario_json(j);
  CHECK(sc.initial.amps[0] == cdouble{1.0});
}

TEST_CASE("field errors carry their JSON paths") {
  {  // missing window.T
    json j = base_scenario();
    j["window"].erase("T");
    expect_issues(j, "s.window.T", "missing required field");
  }
  {  // unknown root key
    json j = base_scenario();
    j["wibble"] = 1;
    expect_issues(j, "s.wibble", "unknown field");
  }
  {  // non-Hermitian dense term
    json j = base_scenario();
    j["dims"] = {2};
    j["initial"] = {{"dense", {{1.0, 0.0}, {0.0, 0.0}}}};
    j["schedule"].erase("pinned_basis");
    j["hamiltonian"] = json::array(
        {{{"kind", "dense"},
          {"matrix", {{{0.0, 0.0}, {1.0, 0.0}}, {{0.0, 0.0}, {0.0, 0.0}}}}}});
    expect_issues(j, "s.hamiltonian", "non-Hermitian");
  }
  {  // both initial forms at once
    json j = base_scenario();
    j["initial"]["dense"] = {{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    expect_issues(j, "s.initial", "exactly one of 'product' or 'dense'");
  }
  {  // neither initial form
    json j = base_scenario();
    j["initial"] = json::object();
    expect_issues(j, "s.initial", "exactly one of 'product' or 'dense'");
  }
  {  // zero-norm state
    json j = base_scenario();
    j["initial"] = {{"dense",
                     {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}}};
    expect_issues(j, "s.initial", "zero norm");
  }
  {  // pauli_chain on a qutrit
    json j = base_scenario();
    j["dims"] = {3, 2};
    j["initial"] = {{"product",
                     {{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}},
                      {{1.0, 0.0}, {0.0, 0.0}}}}};
    j["schedule"].erase("pinned_basis");
    j["hamiltonian"] = json::array({{{"kind", "pauli_chain"}}});
    expect_issues(j, "s.hamiltonian[0]", "dimension to be 2");
  }
  {  // position coupling of a subsystem with itself
    json j = base_scenario();
    j["hamiltonian"][2]["subsystem_b"] = 0;
    expect_issues(j, "s.hamiltonian[2]", "distinct and in range");
  }
  {  // non-unitary pinned basis
    json j = base_scenario();
    j["schedule"]["pinned_basis"][0]["columns"] = {
        {{1.0, 0.0}, {0.0, 0.0}}, {{1.0, 0.0}, {0.0, 0.0}}};
    expect_issues(j, "s.schedule.pinned_basis[0].columns", "not unitary");
  }
  {  // theta outside [0, 1] surfaces through schedule validation
    json j = base_scenario();
    j["schedule"]["policy"]["theta"] = 1.5;
    expect_issues(j, "s.schedule", "theta");
  }
  {  // window shape violations are reported with their diagnostics
    json j = base_scenario();
    j["window"]["coeffs"] = {0.6, 0.4};
    expect_issues(j, "s.window", "f(tau+T) = 0 violated");
  }
  {  // unknown Hamiltonian kind
    json j = base_scenario();
    j["hamiltonian"][0]["kind"] = "hopping";
    expect_issues(j, "s.hamiltonian[0].kind", "unknown Hamiltonian term kind");
  }
  {  // bad fallback token
    json j = base_scenario();
    j["schedule"]["fallback"] = "retry";
    expect_issues(j, "s.schedule.fallback", "'skip' or 'pinned'");
  }
  {  // solve subsystem out of range
    json j = base_scenario();
    j["solve_subsystem"] = 5;
    expect_issues(j, "s.solve_subsystem", "out of range");
  }
}

TEST_CASE("independent issues are collected in one pass") {
  json j = base_scenario();
  j["window"].erase("T");
  j["wibble"] = 1;
  j["hamiltonian"][0]["values"] = {0.35};  // wrong length
  try {
    (void)clab::parse_scenario_json(j, "s");
    FAIL_CHECK("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.issues.size() >= 3);
    CHECK(has_issue(e, "s.window.T"));
    CHECK(has_issue(e, "s.wibble"));
    CHECK(has_issue(e, "s.hamiltonian[0].values"));
  }
}

TEST_CASE("file round trip and malformed JSON") {
  const std::string good = "scenario_unit_good.json";
  {
    std::ofstream out(good);
    out << base_scenario().dump(2) << "\n";
  }
  const Scenario sc = clab::parse_scenario(good);
  CHECK(sc.partition.total_dim == 4);
  // The parsed scenario actually runs.
  const auto sum = clab::run_ensemble(sc.initial, sc.H, sc.schedule, sc.n_traj,
                                      1, sc.sample_cap);
  CHECK(sum.n_traj == 2);
  CHECK(sum.unqualified_triggered == 0);
  std::remove(good.c_str());

  const std::string bad = "scenario_unit_bad.json";
  {
    std::ofstream out(bad);
    out << "{ \"dims\": [2,\n";
  }
  try {
    (void)clab::parse_scenario(bad);
    FAIL_CHECK("expected ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(e.issues.size() == 1);
    CHECK(e.issues[0].find(bad) != std::string::npos);
    CHECK(e.issues[0].find("parse error") != std::string::npos);
  }
  std::remove(bad.c_str());

  CHECK_THROWS_AS((void)clab::parse_scenario("no_such_scenario.json"),
                  ValidationError);
}

}  // TEST_SUITE
