#pragma once

// Executes a Config with a numeric backend. Decoding is causal, so the hidden
// state of a position never changes once computed; a Context keeps the states
// of all earlier positions and computes only the newest one. Attention keys
// with identical exact values are merged into one class (their scores agree
// for every query), which keeps long uniform-attention prefixes cheap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <numeric>
#include <type_traits>
#include <utility>
#include <vector>

#include "ptvm/codec/codec.hpp"
#include "ptvm/codec/tokens.hpp"
#include "ptvm/numerics/backend.hpp"
#include "ptvm/transformer/config.hpp"

namespace ptvm::tf {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class Backend>
class Transformer {
 public:
  using Num = typename Backend::Num;

  Transformer(std::shared_ptr<const Config> cfg, Backend be)
      : cfg_(std::move(cfg)), be_(std::move(be)) {
    cfg_->validate();
    for (const auto& layer : cfg_->layers) {
      for (const auto& h : layer.heads) {
        heads_.push_back(&h);
        tiebreak_.push_back(find_tiebreak(h));
      }
    }
  }

  [[nodiscard]] const Config& config() const { return *cfg_; }
  [[nodiscard]] const Backend& backend() const { return be_; }

  static constexpr std::size_t kBlock = 32;

  class Context {
   public:
    [[nodiscard]] std::size_t size() const { return tokens_.size(); }
    [[nodiscard]] const codec::Tokens& tokens() const { return tokens_; }
    [[nodiscard]] const std::vector<Num>& hidden(std::size_t pos) const { return hidden_.at(pos); }

    struct Mark {
      std::size_t positions;
      std::size_t undo;
    };
    [[nodiscard]] Mark mark() const { return {tokens_.size(), undo_.size()}; }

    void rollback(const Mark& m) {
      while (undo_.size() > m.undo) {
        Undo& u = undo_.back();
        Table& t = tables_[u.head];
        if (u.created) {
          auto range = t.by_hash.equal_range(u.hash);
          for (auto it = range.first; it != range.second; ++it) {
            if (it->second == u.cls) {
              t.by_hash.erase(it);
              break;
            }
          }
          if (!t.group_of.empty()) {
            Group& g = t.groups[t.group_of.back()];
            g.members.pop_back();
            g.top.pop_back();
            g.bottom.pop_back();
            if (g.members.empty()) {
              auto gr = t.group_by_hash.equal_range(g.hash);
              for (auto it = gr.first; it != gr.second; ++it) {
                if (it->second == t.groups.size() - 1) {
                  t.group_by_hash.erase(it);
                  break;
                }
              }
              t.groups.pop_back();
            }
            t.group_of.pop_back();
          }
          t.key_mid.resize(t.key_mid.size() - t.classes.back().key.size());
          t.key_rad.resize(t.key_rad.size() - t.classes.back().key.size());
          t.classes.pop_back();
        } else {
          ClassRec& c = t.classes[u.cls];
          c.sums = std::move(u.old_sums);
          --c.count;
        }
        undo_.pop_back();
      }
      for (auto& t : tables_) t.trim_blocks();
      tokens_.resize(m.positions);
      hidden_.resize(m.positions);
    }

   private:
    friend class Transformer;
    struct ClassRec {
      std::vector<Num> key;
      std::uint64_t count = 0;
      std::vector<Num> sums;
    };
    // Classes whose keys agree off the tiebreak coordinate. Only the members
    // with the largest and smallest tiebreak value can win; top[j] and
    // bottom[j] name them among members[0..j].
    struct Group {
      std::size_t hash = 0;
      std::vector<std::size_t> members;
      std::vector<std::size_t> top;
      std::vector<std::size_t> bottom;
    };
    struct Table {
      std::vector<ClassRec> classes;
      std::vector<Group> groups;  // empty unless the head has a tiebreak coordinate
      std::vector<std::size_t> group_of;
      std::unordered_multimap<std::size_t, std::size_t> group_by_hash;
      std::vector<double> key_mid;  // double enclosures of every class key, flat
      std::vector<double> key_rad;
      // per-coordinate maxima of |key_mid| and key_rad; rollback leaves them
      // as they are, which only loosens the bound
      std::vector<double> abs_max;
      std::vector<double> rad_max;
      // coordinate-wise min and max of key_mid over blocks of kBlock classes
      std::vector<double> block_lo;
      std::vector<double> block_hi;
      std::unordered_multimap<std::size_t, std::size_t> by_hash;

      void trim_blocks() {
        if (classes.empty()) {
          block_lo.clear();
          block_hi.clear();
          return;
        }
        const std::size_t dims = classes[0].key.size();
        const std::size_t n = classes.size();
        const std::size_t nb = (n + kBlock - 1) / kBlock;
        if (block_lo.size() == nb * dims && n % kBlock == 0) return;
        block_lo.resize(nb * dims);
        block_hi.resize(nb * dims);
        const std::size_t b = nb - 1;
        for (std::size_t d = 0; d < dims; ++d) {
          block_lo[b * dims + d] = HUGE_VAL;
          block_hi[b * dims + d] = -HUGE_VAL;
        }
        for (std::size_t i = b * kBlock; i < n; ++i) {
          for (std::size_t d = 0; d < dims; ++d) {
            block_lo[b * dims + d] = std::min(block_lo[b * dims + d], key_mid[i * dims + d]);
            block_hi[b * dims + d] = std::max(block_hi[b * dims + d], key_mid[i * dims + d]);
          }
        }
      }
    };
    struct Undo {
      std::size_t head;
      std::size_t cls;
      bool created;
      std::size_t hash;
      std::vector<Num> old_sums;
    };
    codec::Tokens tokens_;
    std::vector<std::vector<Num>> hidden_;
    std::vector<Table> tables_;
    std::vector<Undo> undo_;
  };

  [[nodiscard]] Context start() const {
    Context ctx;
    ctx.tables_.resize(heads_.size());
    return ctx;
  }

  [[nodiscard]] std::vector<Num> embed(codec::Token t, std::size_t pos) const {
    std::vector<Num> z(cfg_->channels.size(), be_.zero());
    z[cfg_->token_channel[codec::id(t)]] = one_;
    z[cfg_->positional_channel] = be_.positional(pos);
    return z;
  }

  // Append one token and run every layer at the new position.
  void append(Context& ctx, codec::Token t) const {
    const std::size_t pos = ctx.tokens_.size();
    std::vector<Num> z = embed(t, pos);
    std::size_t head_index = 0;
    for (const auto& layer : cfg_->layers) {
      std::vector<std::pair<std::size_t, Num>> writes;
      for (const auto& h : layer.heads) {
        auto out = attend(ctx, head_index++, h, z);
        for (std::size_t k = 0; k < h.outs.size(); ++k) writes.emplace_back(h.outs[k], std::move(out[k]));
      }
      for (auto& [ch, v] : writes) z[ch] = be_.add(z[ch], v);
      for (const auto& s : layer.ffn) run_ffn(s, z);
    }
    ctx.tokens_.push_back(t);
    ctx.hidden_.push_back(std::move(z));
  }

  void append(Context& ctx, const codec::Tokens& ts) const {
    for (auto t : ts) append(ctx, t);
  }

  // Certified argmax over the candidate logits at the last position.
  [[nodiscard]] codec::Token next_token(const Context& ctx) const {
    if (ctx.size() == 0) throw GenerationError("empty context");
    const auto& z = ctx.hidden_.back();
    const auto& ro = cfg_->readout;
    std::size_t best = 0;
    std::vector<std::size_t> ties;
    for (std::size_t k = 1; k < ro.size(); ++k) {
      const int cmp = be_.compare(z[ro[k].second], z[ro[best].second]);
      if (cmp > 0) {
        best = k;
        ties.clear();
      } else if (cmp == 0) {
        ties.push_back(k);
      }
    }
    if (!ties.empty()) {
      throw GenerationError("no unique next token at position " + std::to_string(ctx.size() - 1));
    }
    return ro[best].first;
  }

  // Generate until '$' (the prompt's own '$' does not count).
  codec::Tokens continue_generation(Context& ctx, std::size_t max_new) const {
    codec::Tokens out;
    while (out.size() < max_new) {
      const codec::Token t = next_token(ctx);
      out.push_back(t);
      if (t == codec::Token::Dollar) return out;
      append(ctx, t);
    }
    throw GenerationError("no '$' within " + std::to_string(max_new) + " generated tokens");
  }

  codec::Tokens generate(const codec::Tokens& context, std::size_t max_new) const {
    codec::split_context(context);
    Context ctx = start();
    append(ctx, context);
    return continue_generation(ctx, max_new);
  }

  // One JSON object per position: token and every channel as a double.
  void write_debug_trace(std::ostream& os, const Context& ctx, bool exact = false) const {
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      nlohmann::json ch = nlohmann::json::object();
      const auto& z = ctx.hidden_[i];
      for (std::size_t c = 0; c < z.size(); ++c) {
        if (exact) {
          ch[cfg_->channels[c]] = Backend::exact(z[c]).str();
        } else {
          ch[cfg_->channels[c]] = z[c].to_double();
        }
      }
      os << nlohmann::json{{"pos", i}, {"token", std::string(codec::spell(ctx.tokens_[i]))}, {"channels", ch}}
                .dump()
         << '\n';
    }
  }

 private:
  std::shared_ptr<const Config> cfg_;
  Backend be_;
  std::vector<const Head*> heads_;
  std::vector<int> tiebreak_;  // per head: key coordinate used for grouping, or -1
  Num one_ = be_.from_surd(num::Surd(1L));
  // Only the exact backend may compare through differences; the float backend
  // must round the scores themselves.
  static constexpr bool exact_differences_ = std::is_same_v<Backend, num::ExactBackend>;

  // Grouping on any key coordinate is sound: two classes that agree everywhere
  // else differ there, so the query's sign on it leaves one winner per group.
  // It only pays off on a coordinate that separates positions, which is pos1
  // (1/(i+1)) when a head reads it on its own. Exact backend, Identity heads.
  [[nodiscard]] int find_tiebreak(const Head& h) const {
    if (!exact_differences_ || h.sim != Similarity::Identity || h.key.size() < 2) return -1;
    std::size_t pos1 = 0;
    try {
      pos1 = cfg_->channel("pos1");
    } catch (const ConfigError&) {
      return -1;
    }
    for (std::size_t d = 0; d < h.key.size(); ++d) {
      const Linear& l = h.key[d];
      if (l.terms.size() == 1 && l.terms[0].channel == pos1 && l.bias.is_zero()) return static_cast<int>(d);
    }
    return -1;
  }

  [[nodiscard]] static bool is_exact_zero(const Num& x) {
    if constexpr (std::is_same_v<Num, num::ExactNum>) {
      return x.value().is_zero();
    } else {
      return x.exact().is_zero() && x.ball().rad() == 0 && mpfr_zero_p(x.ball().mid().get());
    }
  }

  [[nodiscard]] Num eval(const Linear& l, const std::vector<Num>& z) const {
    std::vector<num::Weighted<Num>> parts;
    parts.reserve(l.terms.size());
    for (const auto& t : l.terms) {
      const Num& v = z[t.channel];
      if (is_exact_zero(v)) continue;
      parts.push_back({&v, t.w.num, static_cast<unsigned long>(t.w.den)});
    }
    if (parts.empty()) {
      return l.bias.is_zero() ? be_.zero() : be_.from_surd(num::Surd::fraction(l.bias.num, l.bias.den));
    }
    if (l.bias.is_zero() && parts.size() == 1 && parts[0].num == 1 && parts[0].den == 1) {
      return *parts[0].value;
    }
    return be_.linear(l.bias.num, static_cast<unsigned long>(l.bias.den), parts);
  }

  void run_ffn(const FfnStep& s, std::vector<Num>& z) const {
    if (s.kind == FfnStep::Kind::Norm) {
      std::vector<Num> in;
      in.reserve(s.inputs.size());
      for (const auto& l : s.inputs) in.push_back(eval(l, z));
      auto out = be_.layer_norm(in);
      for (std::size_t k = 0; k < s.outs.size(); ++k) z[s.outs[k]] = std::move(out[k]);
      return;
    }
    std::vector<Num> vals;
    std::vector<const Neuron*> used;
    vals.reserve(s.neurons.size());
    for (const auto& n : s.neurons) {
      Num v = eval(n.inner, z);
      if (n.act == Act::Relu) v = be_.relu(v);
      if (is_exact_zero(v)) continue;
      vals.push_back(std::move(v));
      used.push_back(&n);
    }
    std::vector<num::Weighted<Num>> parts;
    parts.reserve(vals.size());
    for (std::size_t k = 0; k < vals.size(); ++k) {
      parts.push_back({&vals[k], used[k]->outer.num, static_cast<unsigned long>(used[k]->outer.den)});
    }
    if (parts.empty()) {
      z[s.outs[0]] = be_.zero();
    } else if (parts.size() == 1 && parts[0].num == 1 && parts[0].den == 1) {
      z[s.outs[0]] = std::move(vals[0]);
    } else {
      z[s.outs[0]] = be_.linear(0, 1, parts);
    }
  }

  struct ScoreBox {
    double mid, lo, hi;
    bool exact;  // mid is the exact score; lo/hi still carry the comparison slack
  };

  // Enclosure of sim(q . k) from the double enclosures of q and k, widened by
  // the backend's comparison slack so that separated boxes are also separated
  // under the backend's own certified comparison.
  [[nodiscard]] ScoreBox score_box(const std::vector<num::Approx>& q, const double* kmid,
                                   const double* krad, Similarity sim) const {
    double s = 0.0;
    double rad = 0.0;
    double mag = 0.0;
    bool exact = true;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double p = q[d].mid * kmid[d];
      if (q[d].rad != 0 || krad[d] != 0) {
        exact = false;
        rad += std::abs(q[d].mid) * krad[d] + std::abs(kmid[d]) * q[d].rad + q[d].rad * krad[d];
      } else if (exact && std::fma(q[d].mid, kmid[d], -p) != 0) {
        exact = false;
      }
      const double ns = s + p;
      if (exact) {
        const double bb = ns - s;
        if ((s - (ns - bb)) + (p - bb) != 0) exact = false;
      }
      s = ns;
      mag += std::abs(p);
    }
    if (!exact) {
      rad = rad * (1 + 0x1p-40) + (mag + std::abs(s)) * (4.0 * static_cast<double>(q.size()) + 4) * 0x1p-53 +
            0x1p-1000;
    }
    if (sim == Similarity::MinTwo) {
      if (s - rad - be_.slack(mag + std::abs(s)) > 2.0) {
        s = 2.0;
        rad = 0.0;
        mag = 2.0;
        exact = true;
      } else if (!(s + rad < 2.0)) {
        const double lo = std::min(s - rad, 2.0);
        return {s, lo - be_.slack(mag + 2.0), 2.0 + be_.slack(2.0), false};
      }
    }
    const double slack = be_.slack(mag + std::abs(s));
    return {s, s - rad - slack, s + rad + slack, exact};
  }

  // Sign of q . (k_i - k_j), touching only coordinates where the keys differ.
  // Disjoint double enclosures prove a difference without exact work.
  template <class Table>
  [[nodiscard]] int difference_sign(const std::vector<Num>& q, const Table& table, std::size_t i,
                                    std::size_t j, std::size_t dims) const {
    const auto& a = table.classes[i].key;
    const auto& b = table.classes[j].key;
    auto differs = [&](std::size_t d) {
      if (is_exact_zero(q[d])) return false;
      const double gap = std::abs(table.key_mid[i * dims + d] - table.key_mid[j * dims + d]);
      if (gap > (table.key_rad[i * dims + d] + table.key_rad[j * dims + d]) * (1 + 0x1p-50)) return true;
      return !(Backend::exact(a[d]) == Backend::exact(b[d]));
    };
    std::size_t first = dims;
    std::size_t used = 0;
    for (std::size_t d = 0; d < dims; ++d) {
      if (!differs(d)) continue;
      if (used++ == 0) first = d;
    }
    if (used == 0) return 0;
    if (used == 1) return be_.sign(q[first]) * be_.compare(a[first], b[first]);
    Num acc = be_.zero();
    for (std::size_t d = first; d < dims; ++d) {
      if (!differs(d)) continue;
      acc = be_.add(acc, be_.mul(q[d], be_.sub(a[d], b[d])));
    }
    return be_.sign(acc);
  }

  [[nodiscard]] Num exact_score(const std::vector<Num>& q, const std::vector<Num>& k, Similarity sim) const {
    Num s = be_.zero();
    for (std::size_t d = 0; d < q.size(); ++d) {
      if (is_exact_zero(q[d]) || is_exact_zero(k[d])) continue;
      s = be_.add(s, be_.mul(q[d], k[d]));
    }
    if (sim == Similarity::MinTwo) {
      const Num two = be_.constant(num::Rational(2));
      if (be_.compare(s, two) > 0) return two;
    }
    return s;
  }

  void join_group(typename Context::Table& table, std::size_t cls, std::size_t tb) const {
    const auto& key = table.classes[cls].key;
    std::size_t hash = key.size();
    for (std::size_t d = 0; d < key.size(); ++d) {
      if (d != tb) num::detail::hash_mix(hash, Backend::exact(key[d]).hash());
    }
    std::size_t gi = SIZE_MAX;
    auto range = table.group_by_hash.equal_range(hash);
    for (auto it = range.first; it != range.second && gi == SIZE_MAX; ++it) {
      const auto& other = table.classes[table.groups[it->second].members.front()].key;
      bool same = true;
      for (std::size_t d = 0; d < key.size() && same; ++d) {
        same = d == tb || Backend::exact(other[d]) == Backend::exact(key[d]);
      }
      if (same) gi = it->second;
    }
    if (gi == SIZE_MAX) {
      gi = table.groups.size();
      table.groups.push_back({hash, {}, {}, {}});
      table.group_by_hash.emplace(hash, gi);
    }
    auto& g = table.groups[gi];
    const auto& v = Backend::exact(key[tb]);
    std::size_t top = cls;
    std::size_t bottom = cls;
    if (!g.members.empty()) {
      if (num::compare(Backend::exact(table.classes[g.top.back()].key[tb]), v) > 0) top = g.top.back();
      if (num::compare(Backend::exact(table.classes[g.bottom.back()].key[tb]), v) < 0) bottom = g.bottom.back();
    }
    g.members.push_back(cls);
    g.top.push_back(top);
    g.bottom.push_back(bottom);
    table.group_of.push_back(gi);
  }

  std::vector<Num> attend(Context& ctx, std::size_t head_index, const Head& h,
                          const std::vector<Num>& z) const {
    using Table = typename Context::Table;
    using ClassRec = typename Context::ClassRec;
    Table& table = ctx.tables_[head_index];

    // Register this position's key and value.
    std::vector<Num> key;
    key.reserve(h.key.size());
    std::size_t hash = h.key.size();
    for (const auto& l : h.key) {
      key.push_back(eval(l, z));
      num::detail::hash_mix(hash, Backend::exact(key.back()).hash());
    }
    std::vector<Num> value;
    value.reserve(h.value.size());
    for (const auto& l : h.value) value.push_back(eval(l, z));

    std::size_t cls = SIZE_MAX;
    auto range = table.by_hash.equal_range(hash);
    for (auto it = range.first; it != range.second && cls == SIZE_MAX; ++it) {
      const ClassRec& c = table.classes[it->second];
      bool same = true;
      for (std::size_t d = 0; d < key.size() && same; ++d) {
        same = Backend::exact(c.key[d]) == Backend::exact(key[d]);
      }
      if (same) cls = it->second;
    }
    if (cls == SIZE_MAX) {
      cls = table.classes.size();
      ClassRec c;
      table.abs_max.resize(key.size(), 0.0);
      table.rad_max.resize(key.size(), 0.0);
      const bool fresh = cls % kBlock == 0;
      const std::size_t b0 = (cls / kBlock) * key.size();
      for (std::size_t d = 0; d < key.size(); ++d) {
        const num::Approx a = Backend::approx(key[d]);
        table.key_mid.push_back(a.mid);
        table.key_rad.push_back(a.rad);
        table.abs_max[d] = std::max(table.abs_max[d], std::abs(a.mid));
        table.rad_max[d] = std::max(table.rad_max[d], a.rad);
        if (fresh) {
          table.block_lo.push_back(a.mid);
          table.block_hi.push_back(a.mid);
        } else {
          table.block_lo[b0 + d] = std::min(table.block_lo[b0 + d], a.mid);
          table.block_hi[b0 + d] = std::max(table.block_hi[b0 + d], a.mid);
        }
      }
      c.key = std::move(key);
      c.count = 1;
      c.sums = std::move(value);
      table.classes.push_back(std::move(c));
      table.by_hash.emplace(hash, cls);
      if (tiebreak_[head_index] >= 0) join_group(table, cls, static_cast<std::size_t>(tiebreak_[head_index]));
      ctx.undo_.push_back({head_index, cls, true, hash, {}});
    } else {
      ClassRec& c = table.classes[cls];
      std::vector<Num> next;
      next.reserve(value.size());
      for (std::size_t d = 0; d < value.size(); ++d) next.push_back(be_.add(c.sums[d], value[d]));
      ctx.undo_.push_back({head_index, cls, false, hash, std::move(c.sums)});
      c.sums = std::move(next);
      ++c.count;
    }

    // Query and hardmax over classes.
    std::vector<Num> q;
    std::vector<num::Approx> qa;
    for (const auto& l : h.query) {
      q.push_back(eval(l, z));
      qa.push_back(Backend::approx(q.back()));
    }
    const auto& classes = table.classes;
    const std::size_t dims = h.key.size();
    thread_local std::vector<std::size_t> ids;
    ids.clear();
    const int tb = tiebreak_[head_index];
    // grouping is used only where it at least halves the scan
    const int side = tb >= 0 && 2 * table.groups.size() <= classes.size()
                         ? Backend::exact(q[static_cast<std::size_t>(tb)]).sign()
                         : 0;
    if (side != 0) {
      for (const auto& g : table.groups) ids.push_back(side > 0 ? g.top.back() : g.bottom.back());
    }
    auto every_class = [&] {
      ids.resize(classes.size());
      std::iota(ids.begin(), ids.end(), std::size_t{0});
    };
    thread_local std::vector<std::size_t> cand;
    cand.clear();
    if (h.sim == Similarity::Identity) {
      // Stage one: plain dot products against one bound that holds for every
      // class. Stage two below redoes the survivors with their own bounds.
      const double err = (4.0 * static_cast<double>(dims) + 4) * 0x1p-53;
      double wide = 0.0;
      double big = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const double qm = std::abs(qa[d].mid);
        wide += qm * table.rad_max[d] + table.abs_max[d] * qa[d].rad + qa[d].rad * table.rad_max[d];
        big += qm * table.abs_max[d];
      }
      wide = wide * (1 + 0x1p-40) + 2 * big * err + 0x1p-1000 + be_.slack(2 * big);
      thread_local std::vector<double> sc;
      const double* kbase = table.key_mid.data();
      double top = -HUGE_VAL;
      auto scan = [&](std::size_t i) {
        const double* km = kbase + i * dims;
        double v = 0.0;
        for (std::size_t d = 0; d < dims; ++d) v += qa[d].mid * km[d];
        sc.push_back(v);
        top = std::max(top, v);
      };
      sc.clear();
      const std::size_t blocks = table.block_lo.size() / std::max<std::size_t>(dims, 1);
      if (side == 0 && blocks >= 4) {
        // Skip whole blocks whose coordinate box cannot reach the running
        // top; the box bound is off from every member's sc by at most wide.
        thread_local std::vector<double> ub;
        ub.resize(blocks);
        std::size_t first = 0;
        for (std::size_t b = 0; b < blocks; ++b) {
          const double* bl = &table.block_lo[b * dims];
          const double* bh = &table.block_hi[b * dims];
          double u = 0.0;
          for (std::size_t d = 0; d < dims; ++d) u += std::max(qa[d].mid * bl[d], qa[d].mid * bh[d]);
          ub[b] = u;
          if (u > ub[first]) first = b;
        }
        ids.clear();
        auto take = [&](std::size_t b) {
          const std::size_t end = std::min(classes.size(), (b + 1) * kBlock);
          for (std::size_t i = b * kBlock; i < end; ++i) {
            ids.push_back(i);
            scan(i);
          }
        };
        take(first);
        for (std::size_t b = 0; b < blocks; ++b) {
          if (b != first && ub[b] + 2 * wide >= top - 2 * wide * (1 + 0x1p-40)) take(b);
        }
      } else {
        if (side == 0) every_class();
        for (const std::size_t i : ids) scan(i);
      }
      const double cut = top - 2 * wide * (1 + 0x1p-40);
      thread_local std::vector<std::size_t> pre;
      pre.clear();
      for (std::size_t n = 0; n < ids.size(); ++n) {
        if (sc[n] >= cut) pre.push_back(n);
      }
      thread_local std::vector<double> lo;
      thread_local std::vector<double> hi;
      lo.resize(pre.size());
      hi.resize(pre.size());
      double floor = -HUGE_VAL;
      for (std::size_t n = 0; n < pre.size(); ++n) {
        const std::size_t i = ids[pre[n]];
        const double* m = &table.key_mid[i * dims];
        const double* r = &table.key_rad[i * dims];
        double rad = 0.0;
        double mag = 0.0;
        for (std::size_t d = 0; d < dims; ++d) {
          mag += std::abs(qa[d].mid * m[d]);
          rad += std::abs(qa[d].mid) * r[d] + std::abs(m[d]) * qa[d].rad + qa[d].rad * r[d];
        }
        const double v = sc[pre[n]];
        const double w = rad * (1 + 0x1p-40) + (mag + std::abs(v)) * err + 0x1p-1000 +
                         be_.slack(mag + std::abs(v));
        lo[n] = v - w;
        hi[n] = v + w;
        floor = std::max(floor, lo[n]);
      }
      for (std::size_t n = 0; n < pre.size(); ++n) {
        if (hi[n] >= floor) cand.push_back(ids[pre[n]]);
      }
    } else {
      if (side == 0) every_class();
      thread_local std::vector<double> lo;
      thread_local std::vector<double> hi;
      lo.resize(ids.size());
      hi.resize(ids.size());
      double floor = -HUGE_VAL;
      for (std::size_t n = 0; n < ids.size(); ++n) {
        const ScoreBox b = score_box(qa, &table.key_mid[ids[n] * dims], &table.key_rad[ids[n] * dims], h.sim);
        lo[n] = b.lo;
        hi[n] = b.hi;
        floor = std::max(floor, lo[n]);
      }
      for (std::size_t n = 0; n < ids.size(); ++n) {
        if (hi[n] >= floor) cand.push_back(ids[n]);
      }
    }
    std::vector<std::size_t> best;
    bool all_exact = cand.size() > 1;
    double first_mid = 0.0;
    for (std::size_t n = 0; n < cand.size() && all_exact; ++n) {
      const ScoreBox b = score_box(qa, &table.key_mid[cand[n] * dims], &table.key_rad[cand[n] * dims], h.sim);
      if (n == 0) first_mid = b.mid;
      all_exact = b.exact && b.mid == first_mid;
    }
    if (cand.size() == 1 || all_exact) {
      best = cand;
    } else if (exact_differences_ && h.sim == Similarity::Identity) {
      // Exact scores need not be formed: the sign of q . (k_i - k_top) only
      // involves the coordinates where the two keys differ.
      best.push_back(cand[0]);
      for (std::size_t n = 1; n < cand.size(); ++n) {
        const int cmp = difference_sign(q, table, cand[n], best[0], dims);
        if (cmp > 0) {
          best.assign(1, cand[n]);
        } else if (cmp == 0) {
          best.push_back(cand[n]);
        }
      }
    } else {
      Num top;
      for (auto i : cand) {
        Num s = exact_score(q, classes[i].key, h.sim);
        if (best.empty()) {
          best.push_back(i);
          top = std::move(s);
          continue;
        }
        const int cmp = be_.compare(s, top);
        if (cmp > 0) {
          best.assign(1, i);
          top = std::move(s);
        } else if (cmp == 0) {
          best.push_back(i);
        }
      }
    }

    std::uint64_t count = 0;
    for (auto i : best) count += classes[i].count;
    std::vector<Num> out;
    out.reserve(h.value.size());
    for (std::size_t d = 0; d < h.value.size(); ++d) {
      Num s = classes[best[0]].sums[d];
      for (std::size_t k = 1; k < best.size(); ++k) s = be_.add(s, classes[best[k]].sums[d]);
      out.push_back(count == 1 ? std::move(s) : be_.div_count(s, count));
    }
    return out;
  }
};

}  // namespace ptvm::tf
