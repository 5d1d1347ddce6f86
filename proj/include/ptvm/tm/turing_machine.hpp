#pragma once

// Multi-tape binary Turing machines with states 0..K (start 0, halt K).
//
// Text format (one item per line, '#' starts a comment):
//
//   tapes <m>
//   start <label>
//   halt <label>
//   <label> <r_0..r_{m-1}> -> <label> <w_0 d_0> ... <w_{m-1} d_{m-1}>
//
// Labels are arbitrary non-space tokens; they are renumbered so that the start
// state is 0, the halt state is K and the others follow in order of first
// appearance. Reads are m bits written together ("10"); each write/move pair is
// a bit followed by L, S or R ("1R"). Every non-halt state must define all 2^m
// transitions.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ptvm/ptm/machine.hpp"
#include "ptvm/ptm/program.hpp"

namespace ptvm::tm {

enum class Move : std::int8_t { L = -1, S = 0, R = 1 };

inline char move_char(Move m) { return m == Move::L ? 'L' : (m == Move::S ? 'S' : 'R'); }

struct Action {
  std::size_t next = 0;
  std::vector<std::uint8_t> write;
  std::vector<Move> move;
  bool defined = false;
};

class InvalidMachine : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TuringMachine {
  std::size_t tapes = 2;
  std::size_t halt_state = 1;  // K; states 0..K-1 carry transitions
  std::vector<Action> delta;   // indexed by q * 2^m + reads (tape 0 is the high bit)
  std::vector<std::string> labels;  // optional, one per state 0..K

  [[nodiscard]] std::size_t num_reads() const { return std::size_t{1} << tapes; }
  [[nodiscard]] static std::size_t read_code(const std::vector<std::uint8_t>& r) {
    std::size_t c = 0;
    for (auto b : r) c = c * 2 + b;
    return c;
  }
  [[nodiscard]] const Action& action(std::size_t q, std::size_t code) const {
    return delta.at(q * num_reads() + code);
  }
  Action& action(std::size_t q, std::size_t code) { return delta.at(q * num_reads() + code); }

  static TuringMachine blank(std::size_t tapes, std::size_t k) {
    if (tapes == 0 || tapes > 16) throw InvalidMachine("tape count must be between 1 and 16");
    if (k == 0) throw InvalidMachine("a machine needs at least one non-halt state");
    TuringMachine m;
    m.tapes = tapes;
    m.halt_state = k;
    m.delta.assign(k << tapes, Action{});
    return m;
  }

  void set(std::size_t q, const std::vector<std::uint8_t>& reads, std::size_t next,
           std::vector<std::uint8_t> write, std::vector<Move> move) {
    if (q >= halt_state) throw InvalidMachine("transition from the halt state or unknown state");
    if (next > halt_state) throw InvalidMachine("transition to an unknown state");
    if (reads.size() != tapes || write.size() != tapes || move.size() != tapes) {
      throw InvalidMachine("transition arity does not match the tape count");
    }
    Action& a = action(q, read_code(reads));
    if (a.defined) throw InvalidMachine("duplicate transition for state " + std::to_string(q));
    a = Action{next, std::move(write), std::move(move), true};
  }

  void check_complete() const {
    for (std::size_t q = 0; q < halt_state; ++q) {
      for (std::size_t c = 0; c < num_reads(); ++c) {
        if (!action(q, c).defined) {
          throw InvalidMachine("state " + std::to_string(q) + " lacks a transition for reads " +
                               std::to_string(c));
        }
      }
    }
  }
};

struct TmRunResult {
  std::string output;
  std::uint64_t steps = 0;
  std::vector<ptm::Tape> tapes;
  std::vector<std::int64_t> heads;
};

// Input S(x) on tape 0 from cell 0, all heads at 0; output decodes tape 0.
inline TmRunResult tm_run(const TuringMachine& m, std::string_view x,
                          std::uint64_t fuel = ptm::kDefaultFuel) {
  TmRunResult r;
  r.tapes.resize(m.tapes);
  r.heads.assign(m.tapes, 0);
  const auto enc = ptm::shannon_encode(x);
  for (std::size_t i = 0; i < enc.size(); ++i) r.tapes[0].write(static_cast<std::int64_t>(i), enc[i]);
  std::size_t q = 0;
  std::vector<std::uint8_t> reads(m.tapes);
  while (q != m.halt_state) {
    if (r.steps >= fuel) throw ptm::FuelExhausted(fuel);
    for (std::size_t t = 0; t < m.tapes; ++t) reads[t] = r.tapes[t].read(r.heads[t]);
    const Action& a = m.action(q, TuringMachine::read_code(reads));
    if (!a.defined) throw InvalidMachine("no transition from state " + std::to_string(q));
    for (std::size_t t = 0; t < m.tapes; ++t) {
      r.tapes[t].write(r.heads[t], a.write[t]);
      r.heads[t] += static_cast<int>(a.move[t]);
    }
    q = a.next;
    ++r.steps;
  }
  r.output = ptm::shannon_decode(
      [&](std::size_t i) { return r.tapes[0].read(static_cast<std::int64_t>(i)); });
  return r;
}

// Renumber arbitrary labels: start -> 0, others by first appearance, halt -> K.
inline std::map<std::string, std::size_t> normalize_labels(const std::string& start,
                                                           const std::string& halt,
                                                           const std::vector<std::string>& seen) {
  if (start == halt) throw InvalidMachine("start and halt states must differ");
  std::map<std::string, std::size_t> idx;
  idx[start] = 0;
  std::size_t next = 1;
  for (const auto& s : seen) {
    if (s == halt || idx.count(s)) continue;
    idx[s] = next++;
  }
  idx[halt] = next;
  return idx;
}

inline TuringMachine parse_tm(std::string_view text) {
  std::size_t tapes = 0;
  std::string start;
  std::string halt;
  struct Row {
    std::size_t line;
    std::string from, reads, to;
    std::vector<std::string> acts;
  };
  std::vector<Row> rows;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ptm::ParseError(line_no, 1, msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    std::istringstream ls(raw);
    std::vector<std::string> w;
    for (std::string t; ls >> t;) w.push_back(t);
    if (w.empty()) continue;
    if (w[0] == "tapes") {
      if (w.size() != 2) fail("expected 'tapes <m>'");
      try {
        tapes = std::stoul(w[1]);
      } catch (const std::exception&) {
        fail("tape count is not a number");
      }
      if (tapes == 0 || tapes > 16) fail("tape count must be between 1 and 16");
    } else if (w[0] == "start") {
      if (w.size() != 2) fail("expected 'start <label>'");
      start = w[1];
    } else if (w[0] == "halt") {
      if (w.size() != 2) fail("expected 'halt <label>'");
      halt = w[1];
    } else {
      if (w.size() < 4 || w[2] != "->") fail("expected '<state> <reads> -> <state> <writes...>'");
      Row r{line_no, w[0], w[1], w[3], {w.begin() + 4, w.end()}};
      seen.push_back(r.from);
      seen.push_back(r.to);
      rows.push_back(std::move(r));
    }
  }
  if (tapes == 0) throw ptm::ParseError(line_no, 1, "missing 'tapes' line");
  if (start.empty()) throw ptm::ParseError(line_no, 1, "missing 'start' line");
  if (halt.empty()) throw ptm::ParseError(line_no, 1, "missing 'halt' line");
  const auto idx = normalize_labels(start, halt, seen);
  TuringMachine m = TuringMachine::blank(tapes, idx.at(halt));
  m.labels.resize(idx.size());
  for (const auto& [name, i] : idx) m.labels[i] = name;
  for (const auto& r : rows) {
    line_no = r.line;
    if (r.from == halt) fail("the halt state has no transitions");
    if (r.reads.size() != tapes) fail("reads must list one bit per tape");
    std::vector<std::uint8_t> reads;
    for (char c : r.reads) {
      if (c != '0' && c != '1') fail("reads must be bits");
      reads.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    if (r.acts.size() != tapes) fail("expected one write/move pair per tape");
    std::vector<std::uint8_t> write;
    std::vector<Move> move;
    for (const auto& a : r.acts) {
      if (a.size() != 2 || (a[0] != '0' && a[0] != '1') ||
          (a[1] != 'L' && a[1] != 'S' && a[1] != 'R')) {
        fail("write/move pair '" + a + "' must look like 1R, 0S or 1L");
      }
      write.push_back(static_cast<std::uint8_t>(a[0] - '0'));
      move.push_back(a[1] == 'L' ? Move::L : (a[1] == 'S' ? Move::S : Move::R));
    }
    try {
      m.set(idx.at(r.from), reads, idx.at(r.to), write, move);
    } catch (const InvalidMachine& e) {
      fail(e.what());
    }
  }
  try {
    m.check_complete();
  } catch (const InvalidMachine& e) {
    throw ptm::ParseError(line_no, 1, e.what());
  }
  return m;
}

inline TuringMachine load_tm(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open machine file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_tm(ss.str());
}

inline std::string format_tm(const TuringMachine& m) {
  auto label = [&](std::size_t q) {
    return q < m.labels.size() && !m.labels[q].empty() ? m.labels[q] : std::to_string(q);
  };
  std::ostringstream os;
  os << "tapes " << m.tapes << "\nstart " << label(0) << "\nhalt " << label(m.halt_state) << "\n";
  for (std::size_t q = 0; q < m.halt_state; ++q) {
    for (std::size_t c = 0; c < m.num_reads(); ++c) {
      const Action& a = m.action(q, c);
      if (!a.defined) continue;
      os << label(q) << ' ';
      for (std::size_t t = 0; t < m.tapes; ++t) os << ((c >> (m.tapes - 1 - t)) & 1);
      os << " -> " << label(a.next);
      for (std::size_t t = 0; t < m.tapes; ++t) os << ' ' << int(a.write[t]) << move_char(a.move[t]);
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace ptvm::tm
