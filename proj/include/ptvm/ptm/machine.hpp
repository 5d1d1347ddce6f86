#pragma once

#include <cstdint>
#include <json.hpp>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ptvm/ptm/program.hpp"
#include "ptvm/ptm/shannon.hpp"

namespace ptvm::ptm {

// Bi-infinite binary tape; cells never written read as 0.
class Tape {
 public:
  [[nodiscard]] std::uint8_t read(std::int64_t cell) const {
    auto it = cells_.find(cell);
    return it == cells_.end() ? 0 : it->second;
  }
  void write(std::int64_t cell, std::uint8_t bit) {
    if (bit) {
      cells_[cell] = 1;
    } else {
      cells_.erase(cell);
    }
  }
  [[nodiscard]] const std::unordered_map<std::int64_t, std::uint8_t>& cells() const { return cells_; }
  friend bool operator==(const Tape& a, const Tape& b) { return a.cells_ == b.cells_; }

 private:
  std::unordered_map<std::int64_t, std::uint8_t> cells_;  // only 1-cells are stored
};

struct MachineState {
  Tape tape_a;
  Tape tape_b;
  std::int64_t head_a = 0;
  std::int64_t head_b = 0;
  std::size_t pc = 0;
  bool halted = false;

  [[nodiscard]] const Tape& tape(TapeId t) const { return t == TapeId::A ? tape_a : tape_b; }
  Tape& tape(TapeId t) { return t == TapeId::A ? tape_a : tape_b; }
  [[nodiscard]] std::int64_t head(TapeId t) const { return t == TapeId::A ? head_a : head_b; }
  std::int64_t& head(TapeId t) { return t == TapeId::A ? head_a : head_b; }
  [[nodiscard]] std::uint8_t read(TapeId t) const { return tape(t).read(head(t)); }

  friend bool operator==(const MachineState& x, const MachineState& y) {
    return x.tape_a == y.tape_a && x.tape_b == y.tape_b && x.head_a == y.head_a &&
           x.head_b == y.head_b && x.pc == y.pc && x.halted == y.halted;
  }
};

// What one step saw: the instruction index, the instruction, and the cells
// under both heads before it executed.
struct StepRecord {
  std::size_t j = 0;
  Instruction instr;
  std::uint8_t c_a = 0;
  std::uint8_t c_b = 0;
  std::int64_t head_a = 0;
  std::int64_t head_b = 0;

  [[nodiscard]] bool goto_taken() const {
    const std::uint8_t c = instr.tape == TapeId::A ? c_a : c_b;
    if (instr.kind == Kind::GotoIfZero) return c == 0;
    if (instr.kind == Kind::GotoIfOne) return c == 1;
    return false;
  }
};

class FuelExhausted : public std::runtime_error {
 public:
  explicit FuelExhausted(std::uint64_t fuel)
      : std::runtime_error("machine did not halt within " + std::to_string(fuel) + " steps"),
        fuel_(fuel) {}
  [[nodiscard]] std::uint64_t fuel() const { return fuel_; }

 private:
  std::uint64_t fuel_;
};

inline constexpr std::uint64_t kDefaultFuel = 1'000'000;

inline MachineState init_state(std::string_view x) {
  MachineState s;
  const auto enc = shannon_encode(x);
  for (std::size_t i = 0; i < enc.size(); ++i) s.tape_a.write(static_cast<std::int64_t>(i), enc[i]);
  return s;
}

inline std::string decode_output(const MachineState& s) {
  return shannon_decode([&](std::size_t i) { return s.tape_a.read(static_cast<std::int64_t>(i)); });
}

inline StepRecord step(const Program& p, MachineState& s) {
  if (s.halted) throw std::logic_error("step on a halted machine");
  if (s.pc >= p.size()) throw InvalidProgram("program counter out of range");
  const Instruction& in = p[s.pc];
  StepRecord rec{s.pc, in, s.read(TapeId::A), s.read(TapeId::B), s.head_a, s.head_b};
  switch (in.kind) {
    case Kind::Halt:
      s.halted = true;
      break;
    case Kind::Move:
      s.head(in.tape) += static_cast<int>(in.dir);
      ++s.pc;
      break;
    case Kind::Write:
      s.tape(in.tape).write(s.head(in.tape), in.bit);
      ++s.pc;
      break;
    case Kind::GotoIfZero:
    case Kind::GotoIfOne:
      s.pc = rec.goto_taken() ? in.target : s.pc + 1;
      break;
  }
  if (!s.halted && s.pc >= p.size()) {
    throw InvalidProgram("execution ran past the last instruction");
  }
  return rec;
}

struct RunResult {
  std::string output;
  std::vector<StepRecord> trace;
  std::uint64_t steps = 0;
  MachineState final_state;
};

inline RunResult run(const Program& p, std::string_view x, std::uint64_t fuel = kDefaultFuel,
                     bool keep_trace = true) {
  validate(p);
  RunResult r;
  MachineState s = init_state(x);
  while (!s.halted) {
    if (r.steps >= fuel) throw FuelExhausted(fuel);
    StepRecord rec = step(p, s);
    ++r.steps;
    if (keep_trace) r.trace.push_back(rec);
  }
  r.output = decode_output(s);
  r.final_state = std::move(s);
  return r;
}

inline nlohmann::json trace_line(std::uint64_t index, const StepRecord& rec) {
  return nlohmann::json{{"step", index},          {"pc", rec.j},
                        {"instr", to_string(rec.instr)}, {"head_a", rec.head_a},
                        {"head_b", rec.head_b},    {"read_a", rec.c_a},
                        {"read_b", rec.c_b}};
}

inline void write_trace_jsonl(std::ostream& os, const std::vector<StepRecord>& trace) {
  for (std::size_t i = 0; i < trace.size(); ++i) os << trace_line(i, trace[i]).dump() << '\n';
}

}  // namespace ptvm::ptm
