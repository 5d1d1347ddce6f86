#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ptvm/codec/codec.hpp"
#include "ptvm/harness/corpus.hpp"
#include "ptvm/harness/run.hpp"
#include "ptvm/transformer/construction.hpp"
#include "ptvm/transformer/gadgets.hpp"
#include "ptvm/transformer/model.hpp"

using namespace ptvm;
using codec::Token;
using codec::Tokens;
using num::ExactBackend;
using num::Rational;
using num::Surd;

namespace {

ptm::Program dyck() { return ptm::parse_program(harness::read_file(PTVM_CORPUS_DIR "/dyck.ptm")); }

Tokens toks(const char* s) { return codec::parse_tokens(s); }

const Surd& value(const std::vector<ExactBackend::Num>& z, const tf::Config& cfg, const std::string& ch) {
  return ExactBackend::exact(z[cfg.channel(ch)]);
}

// x / sqrt(x^2 + 1) and 1 / sqrt(x^2 + 1)
Surd unit_of(std::int64_t x) {
  const std::uint64_t n = static_cast<std::uint64_t>(x * x + 1);
  return Surd::radical(Rational(x, n), n);
}
Surd unit_one_of(std::int64_t x) {
  const std::uint64_t n = static_cast<std::uint64_t>(x * x + 1);
  return Surd::radical(Rational(1, n), n);
}

bool is_boolean_channel(const std::string& name) {
  static const std::set<std::string> exact = {
      "after_delim", "is_inst", "is_goto_cond", "is_rec_start", "is_rec_end", "is_rec_goto", "read_key",
      "next:=",      "next:/"};
  if (exact.count(name)) return true;
  for (const char* prefix : {"tok:", "sat:"}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  for (const char* suffix : {":is_write", ":write", ":not_found", ":val", ":retr", ":retr_is_write"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
  }
  // fetched instruction tokens; the output logits carry weight 2
  return name.rfind("next:", 0) == 0 && name != "next:0" && name != "next:1" && name != "next:$";
}

std::size_t rounds_to(std::size_t n, std::size_t d) { return (n + d - 1) / d; }

}  // namespace

TEST(Embed, FirstToken) {
  tf::Transformer<ExactBackend> m(harness::gamma(), ExactBackend{});
  const auto z = m.embed(Token::Caret, 0);
  const auto& cfg = m.config();
  for (std::size_t c = 0; c < z.size(); ++c) {
    const Surd& v = ExactBackend::exact(z[c]);
    if (c == cfg.channel("tok:^")) {
      EXPECT_EQ(v, Surd(1));
    } else if (c == cfg.positional_channel) {
      EXPECT_EQ(v, Surd(1) - Surd::radical(Rational(3, 10), 10));
      EXPECT_NEAR(v.to_double(), 1.0 - 3.0 / std::sqrt(10.0), 1e-15);
      EXPECT_NEAR(v.to_double(), 0.05132, 1e-5);
    } else {
      EXPECT_TRUE(v.is_zero()) << cfg.channels[c];
    }
  }
}

TEST(Gadgets, AndTruthTable) {
  ExactBackend be;
  num::FloatBackend fb;
  for (int u = 0; u < 2; ++u) {
    for (int v = 0; v < 2; ++v) {
      const auto r = tf::gadget_and(be, be.constant(u), be.constant(v));
      EXPECT_EQ(ExactBackend::exact(r), Surd(u & v));
      const auto f = tf::gadget_and(fb, fb.constant(u), fb.constant(v));
      EXPECT_EQ(fb.compare(f, fb.constant(u & v)), 0);
    }
  }
}

TEST(Gadgets, EqualExamples) {
  ExactBackend be;
  EXPECT_TRUE(ExactBackend::exact(tf::gadget_equal(be, be.constant(3), be.constant(3))).is_zero());
  EXPECT_EQ(ExactBackend::exact(tf::gadget_equal(be, be.constant(2), be.constant(5))), Surd(1));
}

TEST(Gadgets, EqualOnRandomPairs) {
  ExactBackend be;
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<long> d(-20, 20);
  for (int n = 0; n < 1000; ++n) {
    const Rational a(d(rng), static_cast<unsigned long>(1 + rng() % 5));
    const Rational b = (n % 4 == 0) ? a : Rational(d(rng), static_cast<unsigned long>(1 + rng() % 5));
    const auto r = tf::gadget_equal(be, be.constant(Rational(a).get_num() == 0 ? Rational(0) : a),
                                    be.constant(b));
    Rational ca = a, cb = b;
    ca.canonicalize();
    cb.canonicalize();
    EXPECT_EQ(ExactBackend::exact(r), Surd(ca != cb ? 1 : 0));
  }
}

TEST(Gadgets, FarthestRetrievalExamples) {
  ExactBackend be;
  EXPECT_EQ(tf::gadget_farthest_retrieval(be, {1, -1, 1}), 0u);
  EXPECT_EQ(tf::gadget_farthest_retrieval(be, {0, 0, 0, 0}), 0u);
  EXPECT_EQ(tf::gadget_farthest_retrieval(be, {-1, 1}), 1u);
  EXPECT_THROW(tf::gadget_farthest_retrieval(be, {}), std::invalid_argument);
  EXPECT_THROW(tf::gadget_farthest_retrieval(be, {2}), std::invalid_argument);
}

namespace {
std::size_t scan(const std::vector<int>& v) {
  long total = 0;
  for (int x : v) total += x;
  long s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += v[i];
    if (s == total) return i;
  }
  return v.size();
}
}  // namespace

TEST(Gadgets, FarthestRetrievalExhaustiveShort) {
  ExactBackend be;
  for (std::size_t n = 1; n <= 8; ++n) {
    std::size_t count = 1;
    for (std::size_t k = 0; k < n; ++k) count *= 3;
    std::vector<int> v(n);
    for (std::size_t code = 0; code < count; ++code) {
      std::size_t c = code;
      for (std::size_t k = 0; k < n; ++k, c /= 3) v[k] = static_cast<int>(c % 3) - 1;
      ASSERT_EQ(tf::gadget_farthest_retrieval(be, v), scan(v));
    }
  }
}

TEST(Gadgets, FarthestRetrievalRandomLong) {
  ExactBackend be;
  std::mt19937_64 rng(29);
  for (int n = 0; n < 10'000; ++n) {
    std::vector<int> v(13 + rng() % 28);
    // biased walks so that long prefixes keep returning to the total
    for (auto& x : v) x = static_cast<int>(rng() % 3) - 1;
    ASSERT_EQ(tf::gadget_farthest_retrieval(be, v), scan(v));
  }
}

TEST(Gadgets, FarthestRetrievalFloat) {
  num::FloatBackend fb({64, 32, 0});
  std::mt19937_64 rng(31);
  for (int n = 0; n < 300; ++n) {
    std::vector<int> v(1 + rng() % 20);
    for (auto& x : v) x = static_cast<int>(rng() % 3) - 1;
    ASSERT_EQ(tf::gadget_farthest_retrieval(fb, v), scan(v));
  }
}

TEST(Gadgets, Hardmax) {
  ExactBackend be;
  auto c = [&](long v) { return be.constant(v); };
  auto val = [](const std::vector<ExactBackend::Num>& out) { return ExactBackend::exact(out[0]); };
  const std::vector<std::vector<ExactBackend::Num>> values{{c(1)}, {c(3)}, {c(8)}};
  EXPECT_EQ(val(tf::hardmax_attend(be, {c(1), c(1), c(0)}, values)), Surd(2));
  EXPECT_EQ(val(tf::hardmax_attend(be, {c(0), c(2), c(1)}, values)), Surd(3));
  EXPECT_EQ(val(tf::hardmax_attend(be, {c(5), c(5), c(5)}, values)), Surd(4));
  EXPECT_THROW(tf::hardmax_attend(be, {c(1)}, values), std::invalid_argument);
}

TEST(Config, SerializationRoundTrip) {
  const tf::Config a = tf::build_gamma();
  const std::string s = tf::serialize(a);
  const tf::Config b = tf::from_json(nlohmann::json::parse(s));
  EXPECT_EQ(tf::serialize(b), s);
  EXPECT_EQ(tf::serialize(tf::build_gamma()), s);
  EXPECT_EQ(tf::serialize(*harness::gamma()), s);
  std::set<std::string> names(a.channels.begin(), a.channels.end());
  EXPECT_EQ(names.size(), a.channels.size());
}

TEST(Config, WeightDomain) {
  const tf::Config a = tf::build_gamma();
  std::size_t n = 0;
  std::set<std::string> seen;
  a.for_each_weight([&](const tf::Weight& w) {
    ++n;
    Rational q(std::abs(w.num), static_cast<unsigned long>(w.den));
    q.canonicalize();
    EXPECT_TRUE(q == 0 || q == Rational(1, 2) || q == 1 || q == 2 || q == 3) << w.str();
    seen.insert(q.get_str());
  });
  EXPECT_GT(n, 100u);
  EXPECT_TRUE(seen.count("1/2") && seen.count("3") && seen.count("2"));
  EXPECT_FALSE(tf::weight_allowed({5, 1}));
  EXPECT_FALSE(tf::weight_allowed({1, 3}));
  EXPECT_TRUE(tf::weight_allowed({-1, 2}));
  EXPECT_TRUE(tf::weight_allowed({6, 2}));
}

TEST(Config, RejectsTampering) {
  auto j = tf::to_json(tf::build_gamma());
  j["version"] = 2;
  EXPECT_THROW(tf::from_json(j), tf::ConfigError);
  const std::string s = tf::serialize(tf::build_gamma());
  const std::size_t at = s.find("1/2\"");
  ASSERT_NE(at, std::string::npos);
  std::string bad = s;
  bad[at] = '5';
  EXPECT_THROW(tf::from_json(nlohmann::json::parse(bad)), tf::ConfigError);
}

TEST(NextToken, Examples) {
  tf::Transformer<ExactBackend> m(harness::gamma(), ExactBackend{});
  auto ctx = m.start();
  m.append(ctx, codec::build_prompt(dyck()));
  EXPECT_EQ(m.next_token(ctx), Token::Slash);
  const Tokens example = toks("/ A0 AL A0 AL / AR AR A1 AR BL / A1 : 1 $");
  for (std::size_t i = 0; i < example.size(); ++i) {
    ASSERT_EQ(m.next_token(ctx), example[i]) << i;
    m.append(ctx, example[i]);
  }
  auto single = m.start();
  m.append(single, codec::build_prompt(ptm::parse_program("#")));
  EXPECT_EQ(m.next_token(single), Token::Colon);
  EXPECT_THROW(m.next_token(m.start()), tf::GenerationError);
}

TEST(Generate, Examples) {
  tf::Transformer<ExactBackend> m(harness::gamma(), ExactBackend{});
  EXPECT_EQ(m.generate(codec::build_prompt(dyck()), 1000), toks("/ A0 AL A0 AL / AR AR A1 AR BL / A1 : 1 $"));
  Tokens ctx = codec::build_prompt(dyck());
  const auto tk = codec::tokenize("01");
  ctx.insert(ctx.end(), tk.begin(), tk.end());
  const auto out = m.generate(ctx, 10'000);
  EXPECT_EQ(out, codec::cot_oracle(dyck(), "01"));
  EXPECT_EQ(codec::readout(out), "1");
  EXPECT_EQ(m.generate(codec::build_prompt(ptm::parse_program("#")), 10), toks(": $"));
  EXPECT_THROW(m.generate(codec::build_prompt(dyck()), 5), tf::GenerationError);
  EXPECT_THROW(m.generate(toks("^ A1"), 5), codec::MalformedTokens);
}

TEST(Generate, FloatBackendMatches) {
  for (const char* x : {"", "01", "0011"}) {
    const auto g = harness::generate_float(dyck(), x, num::PrecisionConfig{}, 10'000);
    EXPECT_EQ(g.tokens, codec::cot_oracle(dyck(), x)) << x;
  }
}

TEST(Generate, SessionRollbackIsClean) {
  harness::PromptSession<ExactBackend> s(dyck(), ExactBackend{});
  const auto a = s.generate("0101", 10'000);
  s.generate("1", 10'000);
  s.generate("", 10'000);
  EXPECT_EQ(s.generate("0101", 10'000), a);
  EXPECT_EQ(a, codec::cot_oracle(dyck(), "0101"));
}

TEST(Layers, DyckPromptChannels) {
  harness::PromptSession<ExactBackend> s(dyck(), ExactBackend{});
  s.generate("", 1000);
  const auto& cfg = s.model().config();
  const auto& ctx = s.context();
  const std::size_t prompt_end = s.prompt().size();
  EXPECT_EQ(value(ctx.hidden(1), cfg, "is_inst"), Surd(1));
  EXPECT_EQ(value(ctx.hidden(1), cfg, "is_goto_cond"), Surd(1));
  EXPECT_EQ(value(ctx.hidden(0), cfg, "pos1"), Surd(1));
  for (std::size_t i = 0; i + 1 < prompt_end; ++i) {
    ASSERT_TRUE(value(ctx.hidden(i), cfg, "after_delim").is_zero()) << i;
  }
  for (std::size_t i = prompt_end; i < ctx.size(); ++i) {
    ASSERT_EQ(value(ctx.hidden(i), cfg, "after_delim"), Surd(1)) << i;
  }
  for (const char* t : {"A", "B"}) {
    // nothing written yet: the retrieved position is not a write, so the cell reads 0
    EXPECT_TRUE(value(ctx.hidden(prompt_end), cfg, std::string(t) + ":retr_is_write").is_zero());
    EXPECT_TRUE(value(ctx.hidden(prompt_end), cfg, std::string(t) + ":val").is_zero());
  }
}

// Boolean channels, one-hot tokens, the record bias and the decoded machine
// state, over the corpus and a few random programs.
TEST(Layers, ChannelInvariantsOverCorpus) {
  auto cases = harness::load_corpus(PTVM_CORPUS_DIR);
  for (auto& c : harness::random_corpus(41, 8, {}, harness::all_inputs(2), 2'000, 10)) cases.push_back(std::move(c));
  const auto cfg = harness::gamma();
  std::vector<std::size_t> boolean;
  std::vector<std::size_t> onehot;
  for (std::size_t ch = 0; ch < cfg->channels.size(); ++ch) {
    if (is_boolean_channel(cfg->channels[ch])) boolean.push_back(ch);
    if (cfg->channels[ch].rfind("tok:", 0) == 0) onehot.push_back(ch);
  }
  ASSERT_GT(boolean.size(), 60u);
  ASSERT_EQ(onehot.size(), codec::kNumTokens);
  const std::size_t rec_bias = cfg->channel("rec_bias");
  const std::size_t rec_goto = cfg->channel("is_rec_goto");
  std::size_t inside_goto = 0;
  for (const auto& c : cases) {
    harness::PromptSession<ExactBackend> s(c.program, ExactBackend{});
    for (const auto& x : harness::all_inputs(2)) {
      SCOPED_TRACE(c.id + " on '" + x + "'");
      const auto o = codec::cot_oracle_run(c.program, x);
      ASSERT_EQ(s.generate(x, o.cot.size() + 1), o.cot);
      const auto& ctx = s.context();
      for (std::size_t i = 0; i < ctx.size(); ++i) {
        const auto& z = ctx.hidden(i);
        for (auto ch : boolean) {
          const Surd& v = ExactBackend::exact(z[ch]);
          ASSERT_TRUE(v.is_zero() || v == Surd(1)) << cfg->channels[ch] << " at " << i << " = " << v.str();
        }
        std::size_t hot = 0;
        for (auto ch : onehot) hot += !ExactBackend::exact(z[ch]).is_zero();
        ASSERT_EQ(hot, 1u);
        const Surd& bias = ExactBackend::exact(z[rec_bias]);
        if (ExactBackend::exact(z[rec_goto]).is_zero()) {
          ASSERT_EQ(bias, Surd(3)) << i;
        } else {
          ++inside_goto;
          ASSERT_EQ(compare(bias, Surd(3)), -1) << i;
        }
      }

      // expected (head A, head B, pc) after every step record
      struct Expect {
        std::int64_t a, b, pc;
      };
      std::vector<Expect> want;
      std::int64_t head = 0;
      std::int64_t pc = 0;
      const std::size_t prompt_end = s.prompt().size();
      const Tokens tk = codec::tokenize(x);
      for (auto t : tk) {
        if (t == Token::AR) ++head;
        if (t == Token::AL) --head;
        if (t == Token::At) pc = 0;
        else if (t != Token::Eq && t != Token::Minus) ++pc;
        if (t != Token::Eq && t != Token::Minus) want.push_back({head, 0, pc});
      }
      const auto& tr = o.run.trace;
      for (std::size_t k = 1; k < tr.size(); ++k) {
        want.push_back({tr[k].head_a, tr[k].head_b, static_cast<std::int64_t>(tr[k].j)});
      }
      std::size_t next = 0;
      for (std::size_t i = prompt_end; i < ctx.size(); ++i) {
        const Token t = ctx.tokens()[i];
        if (!(codec::is_move_or_write(t) || t == Token::Slash || t == Token::At)) continue;
        ASSERT_LT(next, want.size());
        const Expect& e = want[next++];
        const auto& z = ctx.hidden(i);
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("A:cur")]), unit_of(e.a)) << i;
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("A:cur_one")]), unit_one_of(e.a)) << i;
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("B:cur")]), unit_of(e.b)) << i;
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("B:cur_one")]), unit_one_of(e.b)) << i;
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("prog_cur")]), unit_of(e.pc)) << i;
        ASSERT_EQ(ExactBackend::exact(z[cfg->channel("prog_cur_one")]), unit_one_of(e.pc)) << i;
      }
      ASSERT_EQ(next, want.size());
    }
  }
  EXPECT_GT(inside_goto, 0u);
  EXPECT_GT(rounds_to(inside_goto, 1), 0u);
}

TEST(Layers, DebugTrace) {
  harness::PromptSession<ExactBackend> s(ptm::parse_program("#"), ExactBackend{});
  s.generate("", 10);
  std::ostringstream os;
  s.model().write_debug_trace(os, s.context(), true);
  std::istringstream in(os.str());
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("pos").get<std::size_t>(), lines);
    EXPECT_EQ(j.at("channels").size(), s.model().config().channels.size());
  }
  EXPECT_EQ(lines, s.context().size());
}
