#pragma once

// Corpus cases: programs checked in as files (.ptm assembly, .tm machines that
// are compiled) and seeded random programs that halt on the inputs tried.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ptvm/ptm/machine.hpp"
#include "ptvm/ptm/program.hpp"
#include "ptvm/tm/compile.hpp"
#include "ptvm/tm/turing_machine.hpp"

namespace ptvm::harness {

struct CorpusCase {
  std::string id;
  ptm::Program program;
  std::optional<tm::TuringMachine> machine;  // set for compiled .tm files
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CorpusCase load_case(const std::filesystem::path& path) {
  CorpusCase c;
  c.id = path.stem().string();
  if (path.extension() == ".tm") {
    c.machine = tm::parse_tm(read_file(path));
    c.program = tm::tm2_to_ptm(*c.machine);
  } else {
    c.program = ptm::parse_program(read_file(path));
  }
  return c;
}

// Every .ptm and .tm file in dir, ordered by file name.
inline std::vector<CorpusCase> load_corpus(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ptm" || ext == ".tm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CorpusCase> out;
  for (const auto& f : files) out.push_back(load_case(f));
  return out;
}

// All bit strings of length 0..max_len, shortest first.
inline std::vector<std::string> all_inputs(std::size_t max_len) {
  std::vector<std::string> out{""};
  for (std::size_t n = 1; n <= max_len; ++n) {
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << n); ++v) {
      std::string x(n, '0');
      for (std::size_t i = 0; i < n; ++i) x[i] = ((v >> (n - 1 - i)) & 1) ? '1' : '0';
      out.push_back(x);
    }
  }
  return out;
}

inline std::string random_bits(std::mt19937_64& rng, std::size_t n) {
  std::string x(n, '0');
  for (auto& ch : x) ch = (rng() & 1) ? '1' : '0';
  return x;
}

struct RandomProgramOptions {
  std::size_t min_length = 2;
  std::size_t max_length = 40;
};

// Uniform instruction kinds and tapes; goto targets uniform over the other
// indices. The last instruction is always a halt so that falling through the
// end cannot happen.
inline ptm::Program random_program(std::mt19937_64& rng, const RandomProgramOptions& opt) {
  using ptm::Instruction;
  using ptm::TapeId;
  std::uniform_int_distribution<std::size_t> len_d(std::max<std::size_t>(opt.min_length, 2),
                                                   std::max(opt.max_length, opt.min_length));
  const std::size_t len = len_d(rng);
  ptm::Program p;
  for (std::size_t j = 0; j + 1 < len; ++j) {
    const TapeId t = (rng() & 1) ? TapeId::B : TapeId::A;
    switch (rng() % 7) {
      case 0: p.push_back(Instruction::halt()); break;
      case 1: p.push_back(Instruction::move(t, ptm::Dir::L)); break;
      case 2: p.push_back(Instruction::move(t, ptm::Dir::R)); break;
      case 3: p.push_back(Instruction::write(t, 0)); break;
      case 4: p.push_back(Instruction::write(t, 1)); break;
      default: {
        std::size_t k = rng() % (len - 1);
        if (k >= j) ++k;
        p.push_back((rng() & 1) ? Instruction::goto_if_one(t, k) : Instruction::goto_if_zero(t, k));
      }
    }
  }
  p.push_back(Instruction::halt());
  ptm::validate(p);
  return p;
}

inline bool halts_on_all(const ptm::Program& p, const std::vector<std::string>& inputs,
                         std::uint64_t fuel) {
  try {
    for (const auto& x : inputs) ptm::run(p, x, fuel, false);
  } catch (const ptm::FuelExhausted&) {
    return false;
  }
  return true;
}

// count random programs, each halting within fuel steps on every input in
// probe_inputs and running at least min_steps on one of them.
inline std::vector<CorpusCase> random_corpus(std::uint64_t seed, std::size_t count,
                                             const RandomProgramOptions& opt,
                                             const std::vector<std::string>& probe_inputs,
                                             std::uint64_t fuel, std::uint64_t min_steps = 0) {
  std::mt19937_64 rng(seed);
  std::vector<CorpusCase> out;
  while (out.size() < count) {
    ptm::Program p = random_program(rng, opt);
    if (!halts_on_all(p, probe_inputs, fuel)) continue;
    std::uint64_t most = 0;
    for (const auto& x : probe_inputs) most = std::max(most, ptm::run(p, x, fuel, false).steps);
    if (most < min_steps) continue;
    out.push_back({"random-" + std::to_string(seed) + "-" + std::to_string(out.size()), std::move(p),
                   std::nullopt});
  }
  return out;
}

}  // namespace ptvm::harness
