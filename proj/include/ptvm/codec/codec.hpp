#pragma once

// Prompts, input tokenization, the chain-of-thought oracle and readout.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "ptvm/codec/tokens.hpp"
#include "ptvm/ptm/machine.hpp"
#include "ptvm/ptm/program.hpp"

namespace ptvm::codec {

// A goto at index j targeting k is written sigma, |k-j| copies of '+' (k > j)
// or '-' (k < j), then '@'.
inline Tokens encode_instruction(std::size_t j, const ptm::Instruction& in) {
  Tokens out{instruction_token(in)};
  if (in.is_goto()) {
    const Token sign = in.target > j ? Token::Plus : Token::Minus;
    const std::size_t d = in.target > j ? in.target - j : j - in.target;
    out.insert(out.end(), d, sign);
    out.push_back(Token::At);
  }
  return out;
}

inline Tokens build_prompt(const ptm::Program& p) {
  ptm::validate(p);
  Tokens out{Token::Caret};
  for (std::size_t j = 0; j < p.size(); ++j) {
    const Tokens e = encode_instruction(j, p[j]);
    out.insert(out.end(), e.begin(), e.end());
  }
  out.push_back(Token::Dollar);
  return out;
}

// Inverse of build_prompt; rejects anything build_prompt cannot produce.
inline ptm::Program parse_prompt(const Tokens& ts) {
  using ptm::Instruction;
  using ptm::TapeId;
  if (ts.size() < 3 || ts.front() != Token::Caret || ts.back() != Token::Dollar) {
    throw MalformedTokens("a prompt is '^', instructions, '$'");
  }
  ptm::Program p;
  std::size_t i = 1;
  const std::size_t end = ts.size() - 1;
  while (i < end) {
    const Token t = ts[i++];
    const std::size_t j = p.size();
    if (!is_goto_token(t)) {
      switch (t) {
        case Token::Halt: p.push_back(Instruction::halt()); break;
        case Token::AL: p.push_back(Instruction::move(TapeId::A, ptm::Dir::L)); break;
        case Token::BL: p.push_back(Instruction::move(TapeId::B, ptm::Dir::L)); break;
        case Token::AR: p.push_back(Instruction::move(TapeId::A, ptm::Dir::R)); break;
        case Token::BR: p.push_back(Instruction::move(TapeId::B, ptm::Dir::R)); break;
        case Token::A0: p.push_back(Instruction::write(TapeId::A, 0)); break;
        case Token::B0: p.push_back(Instruction::write(TapeId::B, 0)); break;
        case Token::A1: p.push_back(Instruction::write(TapeId::A, 1)); break;
        case Token::B1: p.push_back(Instruction::write(TapeId::B, 1)); break;
        default:
          throw MalformedTokens("unexpected token '" + std::string(spell(t)) + "' at position " +
                                std::to_string(i - 1));
      }
      continue;
    }
    if (i >= end || !is_sign(ts[i])) {
      throw MalformedTokens("goto at position " + std::to_string(i - 1) + " lacks an offset");
    }
    const Token sign = ts[i];
    std::size_t d = 0;
    while (i < end && ts[i] == sign) {
      ++d;
      ++i;
    }
    if (i >= end || ts[i] != Token::At) {
      throw MalformedTokens("goto offset at position " + std::to_string(i) + " is not closed by '@'");
    }
    ++i;
    if (sign == Token::Minus && d > j) throw MalformedTokens("goto before the first instruction");
    const std::size_t k = sign == Token::Plus ? j + d : j - d;
    const TapeId tape = (t == Token::AZero || t == Token::AOne) ? TapeId::A : TapeId::B;
    p.push_back((t == Token::AZero || t == Token::BZero) ? Instruction::goto_if_zero(tape, k)
                                                         : Instruction::goto_if_one(tape, k));
  }
  try {
    ptm::validate(p);
  } catch (const ptm::InvalidProgram& e) {
    throw MalformedTokens(e.what());
  }
  return p;
}

// Replaying the result writes S(x) on tape A and leaves head and instruction
// pointer at 0: move right over 2n cells, write the pairs right to left, then
// an always-taken goto back by the length of what came before.
inline Tokens tokenize(std::string_view x) {
  ptm::check_bits(x);
  Tokens out;
  if (x.empty()) return out;
  out.insert(out.end(), 2 * x.size(), Token::AR);
  for (std::size_t k = x.size(); k-- > 0;) {
    if (x[k] == '0') {
      out.insert(out.end(), {Token::AL, Token::AL, Token::A1});
    } else {
      out.insert(out.end(), {Token::AL, Token::A1, Token::AL, Token::A1});
    }
  }
  const std::size_t z = out.size();
  out.push_back(Token::Eq);
  out.insert(out.end(), z, Token::Minus);
  out.push_back(Token::At);
  return out;
}

// A generation context is a prompt followed by tokenize(x) for some x.
struct ContextParts {
  ptm::Program program;
  std::string input;
  std::size_t prompt_end = 0;
  std::size_t input_end = 0;
};

inline ContextParts split_context(const Tokens& ts) {
  ContextParts parts;
  std::size_t i = 0;
  while (i < ts.size() && ts[i] != Token::Dollar) ++i;
  if (i == ts.size()) throw MalformedTokens("context has no prompt terminator '$'");
  parts.prompt_end = i + 1;
  parts.program = parse_prompt(Tokens(ts.begin(), ts.begin() + static_cast<long>(parts.prompt_end)));
  parts.input_end = ts.size();
  if (parts.prompt_end == ts.size()) return parts;
  ptm::Tape tape;
  std::int64_t head = 0;
  for (std::size_t k = parts.prompt_end; k < ts.size() && ts[k] != Token::Eq; ++k) {
    switch (ts[k]) {
      case Token::AR: ++head; break;
      case Token::AL: --head; break;
      case Token::A1: tape.write(head, 1); break;
      default:
        throw MalformedTokens("unexpected token '" + std::string(spell(ts[k])) +
                              "' in the tokenized input");
    }
  }
  parts.input = ptm::shannon_decode([&](std::size_t c) { return tape.read(static_cast<std::int64_t>(c)); });
  const Tokens expect = tokenize(parts.input);
  if (!std::equal(expect.begin(), expect.end(), ts.begin() + static_cast<long>(parts.prompt_end),
                  ts.end()) ||
      expect.size() != ts.size() - parts.prompt_end) {
    throw MalformedTokens("the tokens after the prompt are not a tokenized input");
  }
  return parts;
}

struct OracleResult {
  Tokens cot;
  ptm::RunResult run;
};

inline OracleResult cot_oracle_run(const ptm::Program& p, std::string_view x,
                                   std::uint64_t fuel = ptm::kDefaultFuel) {
  OracleResult r;
  r.run = ptm::run(p, x, fuel);
  for (const auto& rec : r.run.trace) {
    const ptm::Instruction& in = rec.instr;
    if (in.kind == ptm::Kind::Halt) {
      r.cot.push_back(Token::Colon);
      for (char c : r.run.output) r.cot.push_back(c == '1' ? Token::One : Token::Zero);
      r.cot.push_back(Token::Dollar);
    } else if (!in.is_goto()) {
      r.cot.push_back(instruction_token(in));
    } else if (!rec.goto_taken()) {
      r.cot.push_back(Token::Slash);
    } else {
      const bool fwd = in.target > rec.j;
      r.cot.push_back(Token::Eq);
      r.cot.insert(r.cot.end(), fwd ? in.target - rec.j : rec.j - in.target,
                   fwd ? Token::Plus : Token::Minus);
      r.cot.push_back(Token::At);
    }
  }
  return r;
}

inline Tokens cot_oracle(const ptm::Program& p, std::string_view x,
                         std::uint64_t fuel = ptm::kDefaultFuel) {
  return cot_oracle_run(p, x, fuel).cot;
}

// The bits between the last ':' and the final '$'.
inline std::string readout(const Tokens& ts) {
  if (ts.empty() || ts.back() != Token::Dollar) {
    throw MalformedTokens("readout needs a sequence ending in '$'");
  }
  std::size_t i = ts.size() - 1;
  while (i > 0 && ts[i - 1] != Token::Colon) --i;
  if (i == 0) throw MalformedTokens("readout found no ':' before the final '$'");
  std::string out;
  for (std::size_t k = i; k + 1 < ts.size(); ++k) {
    if (ts[k] == Token::Zero) {
      out.push_back('0');
    } else if (ts[k] == Token::One) {
      out.push_back('1');
    } else {
      throw MalformedTokens("non-bit token '" + std::string(spell(ts[k])) + "' in the output");
    }
  }
  return out;
}

// Token stream file: a header line naming the segment boundaries, then the
// tokens on one line.
//   ptvm-stream v1 prompt_end=<P> input_end=<Q> length=<N>
// Tokens [0,P) are the prompt, [P,Q) the tokenized input and [Q,N) generated.
struct Stream {
  Tokens tokens;
  std::size_t prompt_end = 0;
  std::size_t input_end = 0;
};

inline std::string format_stream(const Stream& s) {
  std::ostringstream os;
  os << "ptvm-stream v1 prompt_end=" << s.prompt_end << " input_end=" << s.input_end
     << " length=" << s.tokens.size() << '\n'
     << to_text(s.tokens) << '\n';
  return os.str();
}

inline Stream parse_stream(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  std::getline(in, header);
  Stream s;
  std::size_t len = 0;
  char tail = 0;
  if (std::sscanf(header.c_str(), "ptvm-stream v1 prompt_end=%zu input_end=%zu length=%zu%c",
                  &s.prompt_end, &s.input_end, &len, &tail) != 3) {
    throw MalformedTokens("bad stream header: '" + header + "'");
  }
  std::stringstream rest;
  rest << in.rdbuf();
  s.tokens = parse_tokens(rest.str());
  if (s.tokens.size() != len || s.prompt_end > s.input_end || s.input_end > len) {
    throw MalformedTokens("stream header does not match its tokens");
  }
  return s;
}

}  // namespace ptvm::codec
