#pragma once

// Translations between two-tape Turing machines and 2-PTM programs.

#include <array>
#include <string>

#include "ptvm/ptm/program.hpp"
#include "ptvm/tm/turing_machine.hpp"

namespace ptvm::tm {

inline constexpr std::size_t kBlockSize = 27;

namespace detail {

// eta(q, a, b): write and move on both tapes, then jump unconditionally to the
// block of the next state. A stay move rewrites the symbol just written.
inline void emit_eta(ptm::Program& p, const Action& act) {
  using ptm::Instruction;
  using ptm::TapeId;
  const std::array<TapeId, 2> ids{TapeId::A, TapeId::B};
  for (std::size_t t = 0; t < 2; ++t) {
    p.push_back(Instruction::write(ids[t], act.write[t]));
    switch (act.move[t]) {
      case Move::L: p.push_back(Instruction::move(ids[t], ptm::Dir::L)); break;
      case Move::R: p.push_back(Instruction::move(ids[t], ptm::Dir::R)); break;
      case Move::S: p.push_back(Instruction::write(ids[t], act.write[t])); break;
    }
  }
  p.push_back(Instruction::goto_if_zero(TapeId::A, kBlockSize * act.next));
  p.push_back(Instruction::goto_if_one(TapeId::A, kBlockSize * act.next));
}

}  // namespace detail

// Block q occupies [27q, 27q+27):
//   A?(27q+14) B?(27q+8) eta(q,0,0) eta(q,0,1) B?(27q+21) eta(q,1,0) eta(q,1,1)
// and instruction 27K halts.
inline ptm::Program tm2_to_ptm(const TuringMachine& m) {
  using ptm::Instruction;
  using ptm::TapeId;
  if (m.tapes != 2) throw InvalidMachine("the compiler expects a two-tape machine");
  m.check_complete();
  ptm::Program p;
  p.reserve(kBlockSize * m.halt_state + 1);
  for (std::size_t q = 0; q < m.halt_state; ++q) {
    const std::size_t base = kBlockSize * q;
    p.push_back(Instruction::goto_if_one(TapeId::A, base + 14));
    p.push_back(Instruction::goto_if_one(TapeId::B, base + 8));
    detail::emit_eta(p, m.action(q, 0b00));
    detail::emit_eta(p, m.action(q, 0b01));
    p.push_back(Instruction::goto_if_one(TapeId::B, base + 21));
    detail::emit_eta(p, m.action(q, 0b10));
    detail::emit_eta(p, m.action(q, 0b11));
  }
  p.push_back(Instruction::halt());
  ptm::validate(p);
  return p;
}

// One state per instruction plus a halt state; every PTM step is exactly one
// transition. A fall-through past the last instruction goes to the halt state.
inline TuringMachine ptm_to_tm2(const ptm::Program& p) {
  ptm::validate(p);
  const std::size_t k = p.size();
  TuringMachine m = TuringMachine::blank(2, k);
  m.labels.resize(k + 1);
  for (std::size_t j = 0; j < k; ++j) m.labels[j] = "i" + std::to_string(j);
  m.labels[k] = "halt";
  for (std::size_t j = 0; j < k; ++j) {
    const ptm::Instruction& in = p[j];
    for (std::uint8_t a = 0; a < 2; ++a) {
      for (std::uint8_t b = 0; b < 2; ++b) {
        std::vector<std::uint8_t> w{a, b};
        std::vector<Move> mv{Move::S, Move::S};
        std::size_t next = j + 1;
        const std::size_t t = in.tape == ptm::TapeId::A ? 0 : 1;
        const std::uint8_t c = t == 0 ? a : b;
        switch (in.kind) {
          case ptm::Kind::Halt: next = k; break;
          case ptm::Kind::Move: mv[t] = in.dir == ptm::Dir::L ? Move::L : Move::R; break;
          case ptm::Kind::Write: w[t] = in.bit; break;
          case ptm::Kind::GotoIfZero: if (c == 0) next = in.target; break;
          case ptm::Kind::GotoIfOne: if (c == 1) next = in.target; break;
        }
        m.set(j, {a, b}, next, w, mv);
      }
    }
  }
  return m;
}

}  // namespace ptvm::tm
