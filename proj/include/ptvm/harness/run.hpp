#pragma once

// Running programs through the Transformer and measuring what happens.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ptvm/codec/codec.hpp"
#include "ptvm/harness/corpus.hpp"
#include "ptvm/numerics/backend.hpp"
#include "ptvm/transformer/construction.hpp"
#include "ptvm/transformer/model.hpp"

namespace ptvm::harness {

// Gamma is built once per process; it does not depend on the program.
inline std::shared_ptr<const tf::Config> gamma() {
  static const auto cfg = std::make_shared<const tf::Config>(tf::build_gamma());
  return cfg;
}

// A Transformer with one program's prompt already consumed. Each generation
// rolls back to the end of the prompt, so the prompt is processed once.
template <class Backend>
class PromptSession {
 public:
  PromptSession(const ptm::Program& p, Backend be, std::shared_ptr<const tf::Config> cfg = gamma())
      : model_(std::move(cfg), std::move(be)), ctx_(model_.start()) {
    prompt_ = codec::build_prompt(p);
    model_.append(ctx_, prompt_);
    mark_ = ctx_.mark();
  }

  [[nodiscard]] const codec::Tokens& prompt() const { return prompt_; }
  [[nodiscard]] const tf::Transformer<Backend>& model() const { return model_; }
  [[nodiscard]] const typename tf::Transformer<Backend>::Context& context() const { return ctx_; }

  codec::Tokens generate(std::string_view x, std::size_t max_new) {
    ctx_.rollback(mark_);
    model_.append(ctx_, codec::tokenize(x));
    return model_.continue_generation(ctx_, max_new);
  }

  // Generate against an expected continuation and stop at the first
  // difference. Returns how many tokens agreed.
  std::size_t follow(std::string_view x, const codec::Tokens& expected) {
    ctx_.rollback(mark_);
    model_.append(ctx_, codec::tokenize(x));
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (model_.next_token(ctx_) != expected[i]) return i;
      if (i + 1 < expected.size()) model_.append(ctx_, expected[i]);
    }
    return expected.size();
  }

 private:
  tf::Transformer<Backend> model_;
  typename tf::Transformer<Backend>::Context ctx_;
  codec::Tokens prompt_;
  typename tf::Transformer<Backend>::Context::Mark mark_{};
};

struct FloatGeneration {
  codec::Tokens tokens;
  int escalations = 0;
};

// Float generation, rerun from scratch with doubled guard bits whenever a
// decision cannot be certified.
inline FloatGeneration generate_float(const ptm::Program& p, std::string_view x,
                                      const num::PrecisionConfig& cfg, std::size_t max_new) {
  for (int k = 0;; ++k) {
    const num::PrecisionConfig c = k == 0 ? cfg : cfg.escalated(k);
    try {
      PromptSession<num::FloatBackend> s(p, num::FloatBackend(c));
      return {s.generate(x, max_new), k};
    } catch (const num::PrecisionExhausted&) {
      if (k >= cfg.max_escalations) throw;
    }
  }
}

struct RunReport {
  std::string program_id;
  std::string input;
  std::uint64_t ptm_steps = 0;
  std::uint64_t cot_tokens = 0;
  std::uint64_t total_length = 0;  // prompt + tokenized input + generated
  std::optional<int> min_bits;
  double wall_ms = 0;
  bool oracle_match = false;
  bool readout_match = false;

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j{{"program", program_id},
                     {"input", input},
                     {"n", input.size()},
                     {"ptm_steps", ptm_steps},
                     {"cot_tokens", cot_tokens},
                     {"total_length", total_length},
                     {"wall_ms", wall_ms},
                     {"oracle_match", oracle_match},
                     {"readout_match", readout_match}};
    j["min_bits"] = min_bits ? nlohmann::json(*min_bits) : nlohmann::json(nullptr);
    return j;
  }
  static std::string csv_header() {
    return "program,input,n,ptm_steps,cot_tokens,total_length,min_bits,wall_ms,oracle_match,readout_match";
  }
  [[nodiscard]] std::string csv_row() const {
    std::ostringstream os;
    os << program_id << ',' << input << ',' << input.size() << ',' << ptm_steps << ',' << cot_tokens
       << ',' << total_length << ',' << (min_bits ? std::to_string(*min_bits) : "") << ',' << wall_ms
       << ',' << (oracle_match ? 1 : 0) << ',' << (readout_match ? 1 : 0);
    return os.str();
  }
};

// Generate through the session and compare with the interpreter.
template <class Backend>
RunReport run_case(const std::string& id, const ptm::Program& p, PromptSession<Backend>& session,
                   const std::string& x, std::uint64_t fuel = ptm::kDefaultFuel) {
  RunReport r;
  r.program_id = id;
  r.input = x;
  const auto oracle = codec::cot_oracle_run(p, x, fuel);
  r.ptm_steps = oracle.run.steps;
  const auto t0 = std::chrono::steady_clock::now();
  const codec::Tokens out = session.generate(x, oracle.cot.size() + 1);
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  r.cot_tokens = out.size();
  r.total_length = session.prompt().size() + codec::tokenize(x).size() + out.size();
  r.oracle_match = out == oracle.cot;
  try {
    r.readout_match = codec::readout(out) == oracle.run.output;
  } catch (const codec::MalformedTokens&) {
    r.readout_match = false;
  }
  return r;
}

struct LinearFit {
  double a = 0;  // intercept
  double b = 0;  // slope
  double r2 = 0;
  std::size_t points = 0;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"intercept", a}, {"slope", b}, {"r2", r2}, {"points", points}};
  }
};

// Ordinary least squares y = a + b x. A perfect or constant fit has r2 = 1.
inline LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  LinearFit f;
  f.points = xs.size();
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("fit_line needs two or more points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  f.b = sxx == 0 ? 0 : sxy / sxx;
  f.a = my - f.b * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (f.a + f.b * xs[i]);
    ss_res += e * e;
  }
  f.r2 = syy == 0 ? (ss_res == 0 ? 1.0 : 0.0) : 1.0 - ss_res / syy;
  return f;
}

struct CotGrowthRow {
  std::size_t n = 0;
  std::uint64_t ptm_steps = 0;
  std::uint64_t cot_tokens = 0;
};

struct CotGrowth {
  std::vector<CotGrowthRow> rows;
  LinearFit fit;  // cot_tokens against ptm_steps
  std::vector<std::string> warnings;
};

// CoT length against step count. With a session the tokens are generated by
// the Transformer (and must match the oracle); without one the oracle counts.
template <class Backend = num::ExactBackend>
CotGrowth measure_cot_growth(const ptm::Program& p, const std::vector<std::string>& inputs,
                             PromptSession<Backend>* session = nullptr,
                             std::uint64_t fuel = ptm::kDefaultFuel) {
  CotGrowth g;
  std::vector<double> xs, ys;
  for (const auto& x : inputs) {
    codec::OracleResult o;
    try {
      o = codec::cot_oracle_run(p, x, fuel);
    } catch (const ptm::FuelExhausted& e) {
      g.warnings.push_back("input '" + x + "': " + e.what());
      continue;
    }
    std::uint64_t tokens = o.cot.size();
    if (session) {
      const codec::Tokens out = session->generate(x, o.cot.size() + 1);
      if (out != o.cot) throw std::runtime_error("generation differs from the oracle on '" + x + "'");
      tokens = out.size();
    }
    g.rows.push_back({x.size(), o.run.steps, tokens});
    xs.push_back(static_cast<double>(o.run.steps));
    ys.push_back(static_cast<double>(tokens));
  }
  if (xs.size() >= 2) g.fit = fit_line(xs, ys);
  return g;
}

// Does float generation at s significant bits (no escalation) reproduce the
// exact continuation token for token?
inline bool float_reproduces(const ptm::Program& p, std::string_view x, const codec::Tokens& expected,
                             int significant_bits, int guard_bits) {
  try {
    PromptSession<num::FloatBackend> s(p, num::FloatBackend({significant_bits, guard_bits, 0}));
    return s.follow(x, expected) == expected.size();
  } catch (const num::PrecisionExhausted&) {
    return false;
  } catch (const tf::GenerationError&) {
    return false;
  }
}

// Smallest s >= 8 at which float_reproduces holds, found by doubling from a
// hint and then bisecting. Assumes success is monotone in s.
inline int minimal_bits(const ptm::Program& p, std::string_view x, const codec::Tokens& expected,
                        int guard_bits, int hint = 16, int limit = 4096) {
  int fail = 7;
  int ok = std::max(hint, 8);
  while (!float_reproduces(p, x, expected, ok, guard_bits)) {
    fail = ok;
    ok *= 2;
    if (ok > limit) throw std::runtime_error("no precision up to " + std::to_string(limit) + " bits suffices");
  }
  if (fail == 7 && ok > 8) {
    // the hint succeeded; look below it
    int lo = ok;
    while (lo > 8) {
      const int probe = std::max(8, lo - std::max(1, lo / 4));
      if (float_reproduces(p, x, expected, probe, guard_bits)) {
        ok = probe;
        lo = probe;
      } else {
        fail = probe;
        break;
      }
    }
  }
  while (ok - fail > 1) {
    const int mid = fail + (ok - fail) / 2;
    if (float_reproduces(p, x, expected, mid, guard_bits)) {
      ok = mid;
    } else {
      fail = mid;
    }
  }
  return ok;
}

struct PrecisionRow {
  std::size_t n = 0;
  std::uint64_t total_length = 0;
  int min_bits = 0;
};

struct PrecisionGrowth {
  std::vector<PrecisionRow> rows;
  LinearFit fit;       // min_bits against log2(total_length)
  double envelope = 0;  // smallest a with min_bits <= a + b log2 I at every point
};

// Minimal significant bits against the total sequence length I. The exact
// backend supplies the reference stream.
inline PrecisionGrowth measure_precision_growth(const ptm::Program& p, const std::vector<std::string>& inputs,
                                                int guard_bits) {
  PrecisionGrowth g;
  PromptSession<num::ExactBackend> exact(p, num::ExactBackend{});
  int hint = 16;
  std::vector<double> xs, ys;
  for (const auto& x : inputs) {
    const codec::Tokens ref = exact.generate(x, ptm::kDefaultFuel);
    const std::uint64_t total = exact.prompt().size() + codec::tokenize(x).size() + ref.size();
    const int bits = minimal_bits(p, x, ref, guard_bits, hint);
    hint = bits;
    g.rows.push_back({x.size(), total, bits});
    xs.push_back(std::log2(static_cast<double>(total)));
    ys.push_back(bits);
  }
  if (xs.size() >= 2) {
    g.fit = fit_line(xs, ys);
    g.envelope = -HUGE_VAL;
    for (std::size_t i = 0; i < xs.size(); ++i) g.envelope = std::max(g.envelope, ys[i] - g.fit.b * xs[i]);
  }
  return g;
}

}  // namespace ptvm::harness
