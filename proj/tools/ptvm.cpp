// ptvm: command-line front end.
//
// Every failure prints one JSON object {"error": kind, "message": text} on
// stderr and exits nonzero (2 for usage errors, 1 otherwise).

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ptvm/codec/codec.hpp"
#include "ptvm/harness/corpus.hpp"
#include "ptvm/harness/run.hpp"
#include "ptvm/harness/verify.hpp"
#include "ptvm/numerics/backend.hpp"
#include "ptvm/ptm/machine.hpp"
#include "ptvm/tm/compile.hpp"

using namespace ptvm;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int fail(const std::string& kind, const std::string& message, int code = 1) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

num::PrecisionConfig precision(int bits, std::optional<int> guard, int escalations) {
  num::PrecisionConfig c = num::PrecisionConfig::from_env();
  c.significant_bits = bits;
  if (guard) c.guard_bits = *guard;
  c.max_escalations = escalations;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2-PTM programs, their prompts, and the Transformer that runs them"};
  app.require_subcommand(1);

  std::string program_path, tm_path, input, trace_path, out_path, backend = "exact", direction = "tm2ptm";
  std::string corpus_dir = PTVM_CORPUS_DIR, format = "csv", stream_path;
  int bits = 64, escalations = 8, max_len = 8, random_count = 50;
  std::optional<int> guard;
  std::uint64_t fuel = ptm::kDefaultFuel, seed = 1;
  bool as_stream = false, precision_bits = false;

  auto* compile = app.add_subcommand("compile", "translate between two-tape TMs and 2-PTM assembly");
  compile->add_option("--tm", tm_path, "two-tape machine file (tm2ptm)");
  compile->add_option("--program", program_path, "2-PTM assembly file (ptm2tm)");
  compile->add_option("--direction", direction, "tm2ptm or ptm2tm")->check(CLI::IsMember({"tm2ptm", "ptm2tm"}));
  compile->add_option("-o,--output", out_path, "output file (default stdout)");

  auto* run_ptm = app.add_subcommand("run-ptm", "run a 2-PTM program with the interpreter");
  run_ptm->add_option("--program", program_path, "assembly file")->required();
  run_ptm->add_option("--input", input, "input bits");
  run_ptm->add_option("--fuel", fuel, "step limit");
  run_ptm->add_option("--trace", trace_path, "write the step trace as JSON lines");

  auto* build_prompt = app.add_subcommand("build-prompt", "print the prompt tokens of a program");
  build_prompt->add_option("--program", program_path, "assembly file")->required();
  build_prompt->add_option("--input", input, "also append the tokenized input");
  build_prompt->add_flag("--stream", as_stream, "print in the stream file format");

  auto* tokenize = app.add_subcommand("tokenize", "print the tokens that write an input");
  tokenize->add_option("--input", input, "input bits");

  auto* generate = app.add_subcommand("generate", "run the Transformer on a prompt and input");
  generate->add_option("--program", program_path, "assembly file")->required();
  generate->add_option("--input", input, "input bits");
  generate->add_option("--backend", backend, "exact or float")->check(CLI::IsMember({"exact", "float"}));
  generate->add_option("--bits", bits, "significant bits (float backend)");
  generate->add_option("--guard-bits", guard, "guard bits (float backend; env PTM_GUARD_BITS)");
  generate->add_option("--escalations", escalations, "maximum guard-bit doublings (float backend)");
  generate->add_option("--fuel", fuel, "maximum generated tokens");
  generate->add_option("--trace", trace_path, "write hidden states as JSON lines");
  generate->add_option("--stream-out", stream_path, "write the whole token stream to a file");

  auto* verify = app.add_subcommand("verify", "differential checks over a corpus directory");
  verify->add_option("--corpus", corpus_dir, "directory of .ptm and .tm files");
  verify->add_option("--max-len", max_len, "check every input up to this length");
  verify->add_option("--random", random_count, "number of seeded random programs to add");
  verify->add_option("--seed", seed, "seed for random programs");
  verify->add_option("--fuel", fuel, "interpreter step limit");

  auto* bench = app.add_subcommand("bench", "run report table over a corpus");
  bench->add_option("--corpus", corpus_dir, "directory of .ptm and .tm files");
  bench->add_option("--max-len", max_len, "inputs per program: one per length 0..max-len");
  bench->add_option("--random", random_count, "number of seeded random programs to add");
  bench->add_option("--seed", seed, "seed for inputs and random programs");
  bench->add_option("--fuel", fuel, "interpreter step limit");
  bench->add_option("--out", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  bench->add_option("--guard-bits", guard, "guard bits for the precision search");
  bench->add_flag("--precision", precision_bits, "also binary-search the minimal significant bits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*compile) {
      if (direction == "tm2ptm") {
        if (tm_path.empty()) throw UsageError("compile --direction=tm2ptm needs --tm");
        write_out(out_path, ptm::format_program(tm::tm2_to_ptm(tm::load_tm(tm_path))));
      } else {
        if (program_path.empty()) throw UsageError("compile --direction=ptm2tm needs --program");
        write_out(out_path, tm::format_tm(tm::ptm_to_tm2(ptm::parse_program(harness::read_file(program_path)))));
      }
    } else if (*run_ptm) {
      const auto p = ptm::parse_program(harness::read_file(program_path));
      const auto r = ptm::run(p, input, fuel, !trace_path.empty());
      if (!trace_path.empty()) {
        std::ofstream t(trace_path);
        ptm::write_trace_jsonl(t, r.trace);
      }
      std::cout << json{{"output", r.output}, {"steps", r.steps}}.dump() << '\n';
    } else if (*build_prompt) {
      const auto p = ptm::parse_program(harness::read_file(program_path));
      codec::Stream s;
      s.tokens = codec::build_prompt(p);
      s.prompt_end = s.tokens.size();
      const auto tk = codec::tokenize(input);
      s.tokens.insert(s.tokens.end(), tk.begin(), tk.end());
      s.input_end = s.tokens.size();
      std::cout << (as_stream ? codec::format_stream(s) : codec::to_text(s.tokens) + "\n");
    } else if (*tokenize) {
      std::cout << codec::to_text(codec::tokenize(input)) << '\n';
    } else if (*generate) {
      const auto p = ptm::parse_program(harness::read_file(program_path));
      codec::Tokens context = codec::build_prompt(p);
      const std::size_t prompt_end = context.size();
      const auto tk = codec::tokenize(input);
      context.insert(context.end(), tk.begin(), tk.end());
      codec::Tokens out;
      if (backend == "exact") {
        harness::PromptSession<num::ExactBackend> s(p, num::ExactBackend{});
        out = s.generate(input, fuel);
        if (!trace_path.empty()) {
          std::ofstream t(trace_path);
          s.model().write_debug_trace(t, s.context());
        }
      } else {
        const auto cfg = precision(bits, guard, escalations);
        const auto g = harness::generate_float(p, input, cfg, fuel);
        out = g.tokens;
        if (g.escalations > 0) std::cerr << json{{"escalations", g.escalations}}.dump() << '\n';
        if (!trace_path.empty()) {
          harness::PromptSession<num::FloatBackend> s(p, num::FloatBackend(cfg.escalated(g.escalations)));
          s.generate(input, fuel);
          std::ofstream t(trace_path);
          s.model().write_debug_trace(t, s.context());
        }
      }
      if (!stream_path.empty()) {
        codec::Stream s{context, prompt_end, context.size()};
        s.tokens.insert(s.tokens.end(), out.begin(), out.end());
        write_out(stream_path, codec::format_stream(s));
      }
      std::cout << codec::to_text(out) << '\n';
    } else if (*verify || *bench) {
      auto cases = harness::load_corpus(corpus_dir);
      const auto probe = harness::all_inputs(std::min(max_len, 4));
      for (auto& c : harness::random_corpus(seed, static_cast<std::size_t>(random_count), {}, probe, 10'000)) {
        cases.push_back(std::move(c));
      }
      if (*verify) {
        json report = json::array();
        bool ok = true;
        for (const auto& c : cases) {
          const auto v = harness::verify_case(c, harness::all_inputs(static_cast<std::size_t>(max_len)), fuel);
          ok = ok && v.ok();
          report.push_back(v.to_json());
        }
        std::cout << json{{"ok", ok}, {"cases", report}}.dump(1) << '\n';
        return ok ? 0 : 1;
      }
      std::mt19937_64 rng(seed);
      std::vector<harness::RunReport> rows;
      for (const auto& c : cases) {
        harness::PromptSession<num::ExactBackend> s(c.program, num::ExactBackend{});
        for (int n = 0; n <= max_len; ++n) {
          const std::string x = harness::random_bits(rng, static_cast<std::size_t>(n));
          harness::RunReport r;
          try {
            r = harness::run_case(c.id, c.program, s, x, fuel);
          } catch (const ptm::FuelExhausted&) {
            continue;
          }
          if (precision_bits) {
            const auto ref = codec::cot_oracle(c.program, x, fuel);
            r.min_bits = harness::minimal_bits(c.program, x, ref, guard.value_or(num::PrecisionConfig::from_env().guard_bits));
          }
          rows.push_back(std::move(r));
        }
      }
      if (format == "csv") {
        std::cout << "# measured by this tool; not figures from any publication\n"
                  << harness::RunReport::csv_header() << '\n';
        for (const auto& r : rows) std::cout << r.csv_row() << '\n';
      } else {
        json arr = json::array();
        for (const auto& r : rows) arr.push_back(r.to_json());
        std::cout << json{{"note", "measured by this tool"}, {"runs", arr}}.dump(1) << '\n';
      }
    }
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const ptm::ParseError& e) {
    return fail("parse", e.what());
  } catch (const ptm::InvalidProgram& e) {
    return fail("invalid_program", e.what());
  } catch (const tm::InvalidMachine& e) {
    return fail("invalid_machine", e.what());
  } catch (const ptm::FuelExhausted& e) {
    return fail("fuel_exhausted", e.what());
  } catch (const codec::MalformedTokens& e) {
    return fail("malformed_tokens", e.what());
  } catch (const num::PrecisionExhausted& e) {
    return fail("precision_exhausted", e.what());
  } catch (const tf::GenerationError& e) {
    return fail("generation", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
