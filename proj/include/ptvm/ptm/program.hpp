#pragma once

// Two-tape Post-Turing machine programs and their assembly text form.
//
// Mnemonics (whitespace separated, ';' starts a comment):
//   #            halt
//   AL AR BL BR  move head of tape A/B left/right
//   A0 A1 B0 B1  write a bit under head A/B
//   A!k  B!k     goto k if the cell under the head is 0
//   A?k  B?k     goto k if the cell under the head is 1
// Goto targets are absolute instruction indices.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptvm::ptm {

enum class TapeId : std::uint8_t { A = 0, B = 1 };
enum class Dir : std::int8_t { L = -1, R = 1 };

enum class Kind : std::uint8_t { Halt, Move, Write, GotoIfZero, GotoIfOne };

struct Instruction {
  Kind kind = Kind::Halt;
  TapeId tape = TapeId::A;
  Dir dir = Dir::R;
  std::uint8_t bit = 0;
  std::size_t target = 0;

  static Instruction halt() { return {}; }
  static Instruction move(TapeId t, Dir d) { return {Kind::Move, t, d, 0, 0}; }
  static Instruction write(TapeId t, std::uint8_t b) { return {Kind::Write, t, Dir::R, b, 0}; }
  static Instruction goto_if_zero(TapeId t, std::size_t k) { return {Kind::GotoIfZero, t, Dir::R, 0, k}; }
  static Instruction goto_if_one(TapeId t, std::size_t k) { return {Kind::GotoIfOne, t, Dir::R, 0, k}; }

  [[nodiscard]] bool is_goto() const { return kind == Kind::GotoIfZero || kind == Kind::GotoIfOne; }

  friend bool operator==(const Instruction& x, const Instruction& y) {
    if (x.kind != y.kind) return false;
    switch (x.kind) {
      case Kind::Halt: return true;
      case Kind::Move: return x.tape == y.tape && x.dir == y.dir;
      case Kind::Write: return x.tape == y.tape && x.bit == y.bit;
      default: return x.tape == y.tape && x.target == y.target;
    }
  }
};

inline char tape_char(TapeId t) { return t == TapeId::A ? 'A' : 'B'; }

inline std::string to_string(const Instruction& in) {
  std::string s;
  switch (in.kind) {
    case Kind::Halt: return "#";
    case Kind::Move: s += tape_char(in.tape); s += in.dir == Dir::L ? 'L' : 'R'; return s;
    case Kind::Write: s += tape_char(in.tape); s += in.bit ? '1' : '0'; return s;
    case Kind::GotoIfZero: s += tape_char(in.tape); s += '!'; return s + std::to_string(in.target);
    case Kind::GotoIfOne: s += tape_char(in.tape); s += '?'; return s + std::to_string(in.target);
  }
  return s;
}

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + msg),
        line_(line),
        column_(column) {}
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class InvalidProgram : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Program = std::vector<Instruction>;

inline void validate(const Program& p) {
  if (p.empty()) throw InvalidProgram("empty program");
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!p[j].is_goto()) continue;
    if (p[j].target >= p.size()) {
      throw InvalidProgram("instruction " + std::to_string(j) + " jumps to " +
                           std::to_string(p[j].target) + ", outside a program of length " +
                           std::to_string(p.size()));
    }
    if (p[j].target == j) {
      throw InvalidProgram("instruction " + std::to_string(j) + " jumps to itself");
    }
  }
}

inline std::string format_program(const Program& p) {
  std::string out;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (j) out += ' ';
    out += to_string(p[j]);
  }
  return out;
}

inline Instruction parse_instruction(std::string_view w, std::size_t line, std::size_t col) {
  if (w == "#") return Instruction::halt();
  if (w.size() < 2 || (w[0] != 'A' && w[0] != 'B')) {
    throw ParseError(line, col, "unknown mnemonic '" + std::string(w) + "'");
  }
  const TapeId t = w[0] == 'A' ? TapeId::A : TapeId::B;
  const char op = w[1];
  if (w.size() == 2) {
    switch (op) {
      case 'L': return Instruction::move(t, Dir::L);
      case 'R': return Instruction::move(t, Dir::R);
      case '0': return Instruction::write(t, 0);
      case '1': return Instruction::write(t, 1);
      default: break;
    }
  }
  if (op == '!' || op == '?') {
    const std::string_view digits = w.substr(2);
    if (digits.empty()) throw ParseError(line, col, "goto '" + std::string(w) + "' lacks a target");
    std::size_t k = 0;
    for (char c : digits) {
      if (!std::isdigit(static_cast<unsigned char>(c))) {
        throw ParseError(line, col, "goto target in '" + std::string(w) + "' is not a number");
      }
      if (k > (SIZE_MAX - 9) / 10) throw ParseError(line, col, "goto target too large");
      k = k * 10 + static_cast<std::size_t>(c - '0');
    }
    return op == '!' ? Instruction::goto_if_zero(t, k) : Instruction::goto_if_one(t, k);
  }
  throw ParseError(line, col, "unknown mnemonic '" + std::string(w) + "'");
}

inline Program parse_program(std::string_view text) {
  Program p;
  struct Pos {
    std::size_t line, col;
  };
  std::vector<Pos> where;
  std::size_t line = 1;
  std::size_t col = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++col;
      ++i;
      continue;
    }
    if (c == ';') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    const std::size_t start = i;
    const std::size_t start_col = col;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) && text[i] != ';') {
      ++i;
      ++col;
    }
    p.push_back(parse_instruction(text.substr(start, i - start), line, start_col));
    where.push_back({line, start_col});
  }
  if (p.empty()) throw ParseError(line, col, "program has no instructions");
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!p[j].is_goto()) continue;
    if (p[j].target == j) {
      throw ParseError(where[j].line, where[j].col,
                       "instruction " + std::to_string(j) + " jumps to itself");
    }
    if (p[j].target >= p.size()) {
      throw ParseError(where[j].line, where[j].col,
                       "goto target " + std::to_string(p[j].target) + " is past the end (length " +
                           std::to_string(p.size()) + ")");
    }
  }
  return p;
}

}  // namespace ptvm::ptm
