#pragma once

// The fixed network Gamma that executes any 2-PTM program given as a prompt.
//
// Conventions used below. An integer x is carried as the unit vector
// (x, 1)/sqrt(x^2+1) in a pair of channels "<name>" / "<name>_one"; the pair
// (1, 0) marks "start of instruction". Running counts come from uniform
// attention (every score equal), which averages a value over the prefix; the
// prefix length is divided out by normalising against pos1 = 1/(i+1).
// Channels of the form "tok:<t>" hold the one-hot embedding and "next:<t>"
// the logits of the 17 tokens that can be generated.

#include <map>
#include <string>
#include <vector>

#include "ptvm/codec/tokens.hpp"
#include "ptvm/transformer/config.hpp"

namespace ptvm::tf {

namespace detail {

class GammaBuilder {
 public:
  std::size_t channel(const std::string& name) {
    if (idx_.count(name)) throw ConfigError("channel '" + name + "' declared twice");
    idx_[name] = cfg_.channels.size();
    cfg_.channels.push_back(name);
    return idx_[name];
  }

  void layer(const std::string& name) { cfg_.layers.push_back(Layer{name, {}, {}}); }

  void head(const std::string& name, const std::vector<Lin>& q, const std::vector<Lin>& k,
            const std::vector<Lin>& v, const std::vector<std::string>& outs,
            Similarity sim = Similarity::Identity) {
    Head h;
    h.name = name;
    for (const auto& l : q) h.query.push_back(l.compile(idx_));
    for (const auto& l : k) h.key.push_back(l.compile(idx_));
    for (const auto& l : v) h.value.push_back(l.compile(idx_));
    for (const auto& o : outs) h.outs.push_back(channel(o));
    h.sim = sim;
    cfg_.layers.back().heads.push_back(std::move(h));
  }

  struct N {
    Weight outer;
    Act act;
    Lin inner;
  };
  static N relu(const Lin& l, Weight outer = {1, 1}) { return {outer, Act::Relu, l}; }
  static N id(const Lin& l) { return {{1, 1}, Act::Identity, l}; }

  void sum(const std::string& out, const std::vector<N>& ns) {
    FfnStep s;
    s.kind = FfnStep::Kind::Sum;
    for (const auto& n : ns) s.neurons.push_back({n.outer, n.act, n.inner.compile(idx_)});
    s.outs.push_back(channel(out));
    cfg_.layers.back().ffn.push_back(std::move(s));
  }

  void norm(const std::vector<std::string>& outs, const std::vector<Lin>& ins) {
    FfnStep s;
    s.kind = FfnStep::Kind::Norm;
    for (const auto& l : ins) s.inputs.push_back(l.compile(idx_));
    for (const auto& o : outs) s.outs.push_back(channel(o));
    cfg_.layers.back().ffn.push_back(std::move(s));
  }

  Config& cfg() { return cfg_; }
  [[nodiscard]] std::size_t at(const std::string& n) const { return idx_.at(n); }

 private:
  Config cfg_;
  std::map<std::string, std::size_t> idx_;
};

inline Lin c(const std::string& name) { return Lin::of(name); }
inline Lin tok(codec::Token t) { return Lin::of("tok:" + std::string(codec::spell(t))); }

}  // namespace detail

inline Config build_gamma() {
  using codec::Token;
  using detail::c;
  using detail::tok;
  detail::GammaBuilder b;
  using GB = detail::GammaBuilder;

  for (std::size_t t = 0; t < codec::kNumTokens; ++t) {
    b.cfg().token_channel.push_back(b.channel("tok:" + std::string(codec::kSpelling[t])));
  }
  b.cfg().positional_channel = b.channel("pos");

  const Lin one = 1;
  const Lin ad = c("after_delim");
  const std::vector<Token> move_write = {Token::AL, Token::BL, Token::AR, Token::BR,
                                         Token::A0, Token::B0, Token::A1, Token::B1};
  auto sum_tokens = [&](const std::vector<Token>& ts) {
    Lin l;
    for (auto t : ts) l = l + tok(t);
    return l;
  };

  // Position: pos1 = 1/(i+1), (pos2, pos3) = LN(1, pos1).
  b.layer("position");
  b.head("pos1", {one}, {one}, {tok(Token::Caret)}, {"pos1"});
  b.norm({"pos2", "pos3"}, {one, c("pos1")});

  // Which side of the prompt's '$' we are on, and per-token indicators that
  // only depend on the token and that fact.
  b.layer("delimiter");
  b.head("after_delim_disc", {one}, {one}, {tok(Token::Dollar)}, {"after_delim_disc"});
  b.norm({"after_delim"}, {c("after_delim_disc")});
  for (const char* tp : {"A", "B"}) {
    const std::string t = tp;
    const bool a = t == "A";
    const Lin w0 = tok(a ? Token::A0 : Token::B0);
    const Lin w1 = tok(a ? Token::A1 : Token::B1);
    const Lin ml = tok(a ? Token::AL : Token::BL);
    const Lin mr = tok(a ? Token::AR : Token::BR);
    b.sum(t + ":is_write", {GB::relu(w0 + w1 + ad - 1)});
    b.sum(t + ":write", {GB::relu(w1 + ad - 1)});
    b.sum(t + ":move", {GB::relu(mr + ad - 1), GB::relu(ml + ad - 1, {-1, 1})});
  }
  const Lin goto_tokens = sum_tokens({Token::AZero, Token::BZero, Token::AOne, Token::BOne});
  const Lin instr_tokens = sum_tokens(move_write) + tok(Token::Halt) + goto_tokens;
  const Lin mw = sum_tokens(move_write);
  b.sum("is_inst", {GB::relu(instr_tokens - ad)});
  b.sum("is_goto_cond", {GB::id(goto_tokens)});
  b.sum("prog_move", {GB::relu(tok(Token::Plus) + ad - 1), GB::relu(tok(Token::Minus) + ad - 1, {-1, 1})});
  b.sum("is_rec_start",
        {GB::id(tok(Token::Caret)), GB::relu(mw + tok(Token::Slash) + tok(Token::Eq) + ad - 1)});
  b.sum("is_rec_end", {GB::relu(tok(Token::Dollar) + mw + tok(Token::At) + ad - 1)});
  b.sum("is_rec_goto", {GB::relu(tok(Token::Eq) + tok(Token::Minus) + tok(Token::Plus) + ad - 1)});
  b.sum("prog_cur_move", {GB::relu(mw + tok(Token::Slash) + tok(Token::Plus) + ad - 1),
                          GB::relu(tok(Token::Minus) + ad - 1, {-1, 1})});
  const Lin bits = tok(Token::Zero) + tok(Token::One);
  b.sum("read_key", {GB::id(tok(Token::Colon) + bits)});
  b.sum("read_shift0", {GB::id(2 * bits)});
  b.sum("read_shift1", {GB::id(tok(Token::Colon) + 2 * bits)});

  // Tape heads: position = sum of moves, normalised against pos1.
  b.layer("tape_head");
  for (const std::string t : {"A", "B"}) {
    b.head(t + ":cur_disc", {one}, {one}, {c(t + ":move")}, {t + ":cur_disc"});
  }
  for (const std::string t : {"A", "B"}) {
    b.norm({t + ":cur", t + ":cur_one"}, {c(t + ":cur_disc"), c("pos1")});
  }

  // Tape contents: the latest write to the current cell. The p_i * pos1_j term
  // breaks ties between writes to the same cell in favour of the latest one.
  b.layer("tape_read");
  for (const std::string t : {"A", "B"}) {
    b.head(t + ":retrieve", {one, c(t + ":cur"), c(t + ":cur_one"), c("pos")},
           {c(t + ":is_write"), c(t + ":cur"), c(t + ":cur_one"), -c("pos1")},
           {c(t + ":write"), c(t + ":cur"), c(t + ":is_write")},
           {t + ":retr", t + ":retr_cur", t + ":retr_is_write"});
  }
  for (const std::string t : {"A", "B"}) {
    b.norm({t + ":diff_sign"}, {c(t + ":cur") - c(t + ":retr_cur")});
    b.sum(t + ":not_found", {GB::relu(c(t + ":diff_sign")), GB::relu(-c(t + ":diff_sign"))});
    b.sum(t + ":val", {GB::relu(c(t + ":retr") - c(t + ":not_found") + c(t + ":retr_is_write") - 1)});
  }

  // Instruction index of every prompt token.
  b.layer("prog_index");
  b.head("prog_idx_raw", {one}, {one}, {c("is_inst")}, {"prog_idx_raw"});
  b.sum("prog_idx_disc", {GB::id(c("prog_idx_raw") - c("pos1"))});
  b.norm({"prog_idx", "prog_idx_one"}, {c("prog_idx_disc"), c("pos1")});

  // Offset inside a goto instruction; (1, 0) on every instruction-start token.
  b.layer("goto_index");
  b.head("goto_one_disc", {one}, {c("prog_idx")}, {c("is_goto_cond")}, {"goto_one_disc"});
  b.norm({"goto_idx_raw", "goto_idx_raw_one"}, {one - c("goto_one_disc"), c("goto_one_disc")});
  b.sum("goto_idx", {GB::id(c("goto_idx_raw") + c("is_goto_cond"))});
  b.sum("goto_idx_one", {GB::id(c("goto_idx_raw_one") - c("is_goto_cond"))});

  // Records of the chain of thought: rec encodes how many have started.
  b.layer("record");
  b.head("prog_move_disc", {one}, {one}, {c("prog_move")}, {"prog_move_disc"});
  b.head("rec_one_disc", {one}, {c("is_rec_start")}, {tok(Token::Caret)}, {"rec_one_disc"});
  b.norm({"prog_move_norm", "prog_move_norm_one"}, {c("prog_move_disc"), c("pos1")});
  b.norm({"rec", "rec_one"}, {one, c("rec_one_disc")});

  // Offset inside the current record, (1, 0) once a record is complete.
  b.layer("record_offset");
  b.head("tmp_one_disc", {one}, {-c("rec_one_disc")}, {tok(Token::Eq)}, {"tmp_one_disc"});
  b.norm({"tmp_raw", "tmp_raw_one"}, {one, c("tmp_one_disc")});
  b.sum("tmp", {GB::relu(c("tmp_raw") - c("is_rec_end")), GB::id(c("is_rec_end"))});
  b.sum("tmp_one", {GB::relu(c("tmp_raw_one") - c("is_rec_end"))});

  // Inside a goto record the pointer must ignore the record itself; the bias
  // drops just enough below 3 to exclude exactly the current record.
  b.layer("record_bias");
  b.head("rec_diff", {c("rec"), c("rec_one")}, {c("pos2"), c("pos3")}, {c("pos")}, {"rec_diff"});
  b.sum("rec_bias", {GB::id(3), GB::relu(c("rec_diff") + 2 * c("is_rec_goto") - 2, {-1, 2})});

  b.layer("prog_pointer");
  b.head("prog_cur_disc", {c("rec_bias"), -c("rec"), -c("rec_one")}, {one, c("rec"), c("rec_one")},
         {c("prog_cur_move"), tok(Token::Caret)}, {"prog_cur_disc", "prog_cur_one_disc"},
         Similarity::MinTwo);
  b.norm({"prog_cur", "prog_cur_one"}, {c("prog_cur_disc"), c("prog_cur_one_disc")});

  // Fetch the prompt token at (pointer, offset); the earliest match wins.
  b.layer("fetch");
  {
    const std::vector<Token> fetched = {Token::Halt, Token::AL, Token::BL, Token::AR, Token::BR,
                                        Token::A0, Token::B0, Token::A1, Token::B1, Token::AZero,
                                        Token::BZero, Token::AOne, Token::BOne, Token::Minus,
                                        Token::Plus, Token::At};
    std::vector<Lin> vals;
    std::vector<std::string> outs;
    for (auto t : fetched) {
      vals.push_back(tok(t));
      outs.push_back("next:" + std::string(codec::spell(t)));
    }
    vals.push_back(tok(Token::Halt));
    outs.emplace_back("next::");
    b.head("fetch",
           {c("prog_cur"), c("prog_cur_one"), c("tmp"), c("tmp_one"), c("pos"), Lin(-1)},
           {c("prog_idx"), c("prog_idx_one"), c("goto_idx"), c("goto_idx_one"), c("pos1"), one},
           vals, outs);
  }
  b.sum("sat:A!", {GB::relu(c("next:A!") - c("A:val"))});
  b.sum("sat:B!", {GB::relu(c("next:B!") - c("B:val"))});
  b.sum("sat:A?", {GB::relu(c("next:A?") + c("A:val") - 1)});
  b.sum("sat:B?", {GB::relu(c("next:B?") + c("B:val") - 1)});
  b.sum("next:=", {GB::id(c("sat:A!") + c("sat:B!") + c("sat:A?") + c("sat:B?"))});
  b.sum("next:/", {GB::id(c("next:A!") + c("next:B!") + c("next:A?") + c("next:B?") - c("next:="))});

  // Output phase: after ':' emit the decoded cells 2k, 2k+1 of tape A.
  b.layer("read_head");
  b.head("read_disc", {one}, {c("read_key")},
         {c("read_shift0"), c("read_shift1"), tok(Token::Colon)},
         {"read0_disc", "read1_disc", "read_one_disc"});
  b.norm({"read0", "read0_one"}, {c("read0_disc"), c("read_one_disc")});
  b.norm({"read1", "read1_one"}, {c("read1_disc"), c("read_one_disc")});

  b.layer("read_cells");
  for (const std::string r : {"read0", "read1"}) {
    b.head(r + ":retrieve", {one, c(r), c(r + "_one"), c("pos")},
           {c("A:is_write"), c("A:cur"), c("A:cur_one"), -c("pos1")},
           {c("A:write"), c("A:cur"), c("A:is_write")},
           {r + ":retr", r + ":retr_cur", r + ":retr_is_write"});
  }
  for (const std::string r : {"read0", "read1"}) {
    b.norm({r + ":diff_sign"}, {c(r) - c(r + ":retr_cur")});
    b.sum(r + ":not_found", {GB::relu(c(r + ":diff_sign")), GB::relu(-c(r + ":diff_sign"))});
    b.sum(r + ":val", {GB::relu(c(r + ":retr") - c(r + ":not_found") + c(r + ":retr_is_write") - 1)});
  }
  b.sum("next:0", {GB::relu(c("read_key") + c("read0:val") - c("read1:val") - 1, {2, 1})});
  b.sum("next:1", {GB::relu(c("read_key") + c("read0:val") + c("read1:val") - 2, {2, 1})});
  b.sum("next:$", {GB::relu(c("read_key") - c("read0:val"), {2, 1})});

  for (auto t : {Token::AL, Token::BL, Token::AR, Token::BR, Token::A0, Token::B0, Token::A1,
                 Token::B1, Token::Minus, Token::Plus, Token::At, Token::Slash, Token::Eq,
                 Token::Colon, Token::Zero, Token::One, Token::Dollar}) {
    b.cfg().readout.emplace_back(t, b.at("next:" + std::string(codec::spell(t))));
  }
  b.cfg().validate();
  return b.cfg();
}

}  // namespace ptvm::tf
