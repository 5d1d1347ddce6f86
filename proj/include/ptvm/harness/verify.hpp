#pragma once

// Differential checks over a corpus: the Transformer against the interpreter,
// compiled machines against their source machine, and 2-PTMs against their
// two-tape translation.

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "ptvm/harness/corpus.hpp"
#include "ptvm/harness/run.hpp"
#include "ptvm/tm/compile.hpp"

namespace ptvm::harness {

struct CaseVerdict {
  std::string id;
  std::size_t inputs = 0;
  std::size_t skipped = 0;  // inputs on which the interpreter ran out of fuel
  std::vector<std::string> failures;
  double max_step_ratio = 0;  // compiled 2-PTM steps / TM steps, compiled cases only

  [[nodiscard]] bool ok() const { return failures.empty(); }
  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"program", id}, {"inputs", inputs}, {"skipped", skipped}, {"ok", ok()}, {"failures", failures}};
    if (max_step_ratio > 0) j["max_step_ratio"] = max_step_ratio;
    return j;
  }
};

// Compiled program steps may not exceed factor * tm_steps + factor.
inline constexpr std::uint64_t kCompileStepFactor = 9;

inline CaseVerdict verify_case(const CorpusCase& c, const std::vector<std::string>& inputs,
                               std::uint64_t fuel = ptm::kDefaultFuel) {
  CaseVerdict v;
  v.id = c.id;
  PromptSession<num::ExactBackend> session(c.program, num::ExactBackend{});
  const tm::TuringMachine back = tm::ptm_to_tm2(c.program);
  for (const auto& x : inputs) {
    const std::string tag = c.id + " on '" + x + "': ";
    codec::OracleResult o;
    try {
      o = codec::cot_oracle_run(c.program, x, fuel);
    } catch (const ptm::FuelExhausted&) {
      ++v.skipped;
      continue;
    }
    ++v.inputs;
    try {
      const RunReport r = run_case(c.id, c.program, session, x, fuel);
      if (!r.oracle_match) v.failures.push_back(tag + "generated stream differs from the oracle");
      if (!r.readout_match) v.failures.push_back(tag + "readout differs from the interpreter output");
    } catch (const std::exception& e) {
      v.failures.push_back(tag + "generation failed: " + e.what());
    }
    if (c.machine) {
      const auto tr = tm::tm_run(*c.machine, x, fuel);
      if (tr.output != o.run.output) v.failures.push_back(tag + "compiled program disagrees with the machine");
      if (o.run.steps > kCompileStepFactor * tr.steps + kCompileStepFactor) {
        v.failures.push_back(tag + "compiled program took " + std::to_string(o.run.steps) + " steps for " +
                             std::to_string(tr.steps) + " machine steps");
      }
      if (tr.steps > 0) {
        v.max_step_ratio = std::max(v.max_step_ratio, static_cast<double>(o.run.steps) / static_cast<double>(tr.steps));
      }
    }
    const auto bt = tm::tm_run(back, x, fuel + 1);
    if (bt.output != o.run.output || bt.steps != o.run.steps) {
      v.failures.push_back(tag + "two-tape translation disagrees (" + std::to_string(bt.steps) + " vs " +
                           std::to_string(o.run.steps) + " steps)");
    }
  }
  return v;
}

}  // namespace ptvm::harness
