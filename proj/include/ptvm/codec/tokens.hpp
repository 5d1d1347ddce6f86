#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ptvm/ptm/program.hpp"

namespace ptvm::codec {

// Token ids are the positions in this list.
enum class Token : std::uint8_t {
  Halt, AL, BL, AR, BR, A0, B0, A1, B1, AZero, BZero, AOne, BOne,
  Minus, Plus, At, Caret, Dollar, Slash, Eq, Colon, Zero, One,
};

inline constexpr std::size_t kNumTokens = 23;

inline constexpr std::array<std::string_view, kNumTokens> kSpelling = {
    "#", "AL", "BL", "AR", "BR", "A0", "B0", "A1", "B1", "A!", "B!", "A?",
    "B?", "-", "+", "@", "^", "$", "/", "=", ":", "0", "1"};

inline std::string_view spell(Token t) { return kSpelling[static_cast<std::size_t>(t)]; }
inline std::size_t id(Token t) { return static_cast<std::size_t>(t); }
inline Token token_from_id(std::size_t i) {
  if (i >= kNumTokens) throw std::out_of_range("token id " + std::to_string(i));
  return static_cast<Token>(i);
}

using Tokens = std::vector<Token>;

class MalformedTokens : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Token parse_token(std::string_view w) {
  for (std::size_t i = 0; i < kNumTokens; ++i) {
    if (kSpelling[i] == w) return static_cast<Token>(i);
  }
  throw MalformedTokens("unknown token '" + std::string(w) + "'");
}

inline Tokens parse_tokens(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t s = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > s) out.push_back(parse_token(text.substr(s, i - s)));
  }
  return out;
}

inline std::string to_text(const Tokens& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ' ';
    out += spell(ts[i]);
  }
  return out;
}

inline bool is_sign(Token t) { return t == Token::Minus || t == Token::Plus; }
inline bool is_goto_token(Token t) {
  return t == Token::AZero || t == Token::BZero || t == Token::AOne || t == Token::BOne;
}
inline bool is_move_or_write(Token t) {
  return t == Token::AL || t == Token::BL || t == Token::AR || t == Token::BR || t == Token::A0 ||
         t == Token::B0 || t == Token::A1 || t == Token::B1;
}

// Instruction-start token for a PTM instruction (goto targets are dropped).
inline Token instruction_token(const ptm::Instruction& in) {
  using ptm::Dir;
  using ptm::Kind;
  using ptm::TapeId;
  const bool a = in.tape == TapeId::A;
  switch (in.kind) {
    case Kind::Halt: return Token::Halt;
    case Kind::Move:
      if (in.dir == Dir::L) return a ? Token::AL : Token::BL;
      return a ? Token::AR : Token::BR;
    case Kind::Write:
      if (in.bit == 0) return a ? Token::A0 : Token::B0;
      return a ? Token::A1 : Token::B1;
    case Kind::GotoIfZero: return a ? Token::AZero : Token::BZero;
    case Kind::GotoIfOne: return a ? Token::AOne : Token::BOne;
  }
  return Token::Halt;
}

}  // namespace ptvm::codec
