#pragma once

// Declarative description of a Transformer: named residual channels, and a
// schedule of layers. Each layer runs hardmax attention heads on its input and
// then a feed-forward block built from affine maps, ReLU and layer norm. All
// weights and biases are rationals; the serialized form is deterministic.

#include <cstdint>
#include <json.hpp>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptvm/codec/tokens.hpp"

namespace ptvm::tf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Weight {
  int num = 0;
  int den = 1;

  [[nodiscard]] bool is_zero() const { return num == 0; }
  [[nodiscard]] std::string str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }
  static Weight parse(const std::string& s) {
    const auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Weight{std::stoi(s), 1};
      return Weight{std::stoi(s.substr(0, slash)), std::stoi(s.substr(slash + 1))};
    } catch (const std::exception&) {
      throw ConfigError("bad weight '" + s + "'");
    }
  }
  friend bool operator==(const Weight& a, const Weight& b) {
    return static_cast<long>(a.num) * b.den == static_cast<long>(b.num) * a.den;
  }
};

// Every parameter magnitude is one of 0, 1/2, 1, 2, 3.
inline bool weight_allowed(const Weight& w) {
  if (w.den <= 0) return false;
  const int twice_num = 2 * (w.num < 0 ? -w.num : w.num);
  if (twice_num % w.den != 0) return false;
  const int twice = twice_num / w.den;
  return twice == 0 || twice == 1 || twice == 2 || twice == 4 || twice == 6;
}

struct Term {
  std::size_t channel = 0;
  Weight w{1, 1};
};

struct Linear {
  std::vector<Term> terms;
  Weight bias{0, 1};
};

enum class Act { Identity, Relu };

struct Neuron {
  Weight outer{1, 1};
  Act act = Act::Identity;
  Linear inner;
};

struct FfnStep {
  enum class Kind { Sum, Norm } kind = Kind::Sum;
  std::vector<std::size_t> outs;
  std::vector<Neuron> neurons;  // Sum: outs[0] = sum_k outer_k * act_k(inner_k)
  std::vector<Linear> inputs;   // Norm: outs = LN(inputs)
};

enum class Similarity { Identity, MinTwo };

struct Head {
  std::string name;
  std::vector<Linear> query;
  std::vector<Linear> key;
  std::vector<Linear> value;
  std::vector<std::size_t> outs;
  Similarity sim = Similarity::Identity;
};

struct Layer {
  std::string name;
  std::vector<Head> heads;
  std::vector<FfnStep> ffn;
};

struct Config {
  int version = 1;
  std::vector<std::string> channels;
  std::vector<std::size_t> token_channel;  // one-hot embedding channel per token id
  std::size_t positional_channel = 0;
  std::vector<Layer> layers;
  std::vector<std::pair<codec::Token, std::size_t>> readout;  // candidate -> logit channel

  [[nodiscard]] std::size_t channel(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      if (channels[i] == name) return i;
    }
    throw ConfigError("unknown channel '" + name + "'");
  }

  template <class F>
  void for_each_weight(F&& f) const {
    auto lin = [&](const Linear& l) {
      for (const auto& t : l.terms) f(t.w);
      f(l.bias);
    };
    for (const auto& layer : layers) {
      for (const auto& h : layer.heads) {
        for (const auto& l : h.query) lin(l);
        for (const auto& l : h.key) lin(l);
        for (const auto& l : h.value) lin(l);
      }
      for (const auto& s : layer.ffn) {
        for (const auto& n : s.neurons) {
          f(n.outer);
          lin(n.inner);
        }
        for (const auto& l : s.inputs) lin(l);
      }
    }
  }

  // Structural checks: weights in the allowed set, every channel written
  // exactly once, and nothing read before it is written.
  void validate() const {
    for_each_weight([](const Weight& w) {
      if (!weight_allowed(w)) throw ConfigError("weight " + w.str() + " outside {0,1/2,1,2,3}");
    });
    std::vector<bool> ready(channels.size(), false);
    auto write = [&](std::size_t c, const std::string& where) {
      if (c >= channels.size()) throw ConfigError(where + ": channel index out of range");
      if (ready[c]) throw ConfigError(where + ": channel '" + channels[c] + "' written twice");
      ready[c] = true;
    };
    auto read = [&](const Linear& l, const std::string& where) {
      for (const auto& t : l.terms) {
        if (t.channel >= channels.size() || !ready[t.channel]) {
          throw ConfigError(where + ": reads '" +
                            (t.channel < channels.size() ? channels[t.channel] : "?") +
                            "' before it is computed");
        }
      }
    };
    if (token_channel.size() != codec::kNumTokens) throw ConfigError("embedding must cover all tokens");
    for (auto c : token_channel) write(c, "embedding");
    write(positional_channel, "embedding");
    for (const auto& layer : layers) {
      for (const auto& h : layer.heads) {
        const std::string where = layer.name + "/" + h.name;
        if (h.query.size() != h.key.size()) throw ConfigError(where + ": query/key size mismatch");
        if (h.value.size() != h.outs.size()) throw ConfigError(where + ": value/out size mismatch");
        for (const auto& l : h.query) read(l, where);
        for (const auto& l : h.key) read(l, where);
        for (const auto& l : h.value) read(l, where);
      }
      for (const auto& h : layer.heads) {
        for (auto c : h.outs) write(c, layer.name + "/" + h.name);
      }
      for (const auto& s : layer.ffn) {
        const std::string where = layer.name + "/ffn";
        for (const auto& n : s.neurons) read(n.inner, where);
        for (const auto& l : s.inputs) read(l, where);
        if (s.kind == FfnStep::Kind::Sum && s.outs.size() != 1) throw ConfigError(where + ": sum writes one channel");
        if (s.kind == FfnStep::Kind::Norm && s.outs.size() != s.inputs.size()) throw ConfigError(where + ": norm arity");
        for (auto c : s.outs) write(c, where);
      }
    }
    for (const auto& [tok, c] : readout) {
      if (c >= channels.size() || !ready[c]) throw ConfigError("readout channel not computed");
    }
  }
};

// ---- serialization ---------------------------------------------------------

inline nlohmann::json linear_json(const Config& c, const Linear& l) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : l.terms) terms.push_back({c.channels[t.channel], t.w.str()});
  return {{"terms", terms}, {"bias", l.bias.str()}};
}

inline nlohmann::json to_json(const Config& c) {
  using nlohmann::json;
  json j;
  j["format"] = "ptvm-transformer";
  j["version"] = c.version;
  j["channels"] = c.channels;
  json emb = json::object();
  for (std::size_t t = 0; t < c.token_channel.size(); ++t) {
    emb[std::string(codec::kSpelling[t])] = c.channels[c.token_channel[t]];
  }
  j["embedding"] = {{"tokens", emb}, {"positional", c.channels[c.positional_channel]}};
  json layers = json::array();
  for (const auto& layer : c.layers) {
    json heads = json::array();
    for (const auto& h : layer.heads) {
      json q = json::array(), k = json::array(), v = json::array(), o = json::array();
      for (const auto& l : h.query) q.push_back(linear_json(c, l));
      for (const auto& l : h.key) k.push_back(linear_json(c, l));
      for (const auto& l : h.value) v.push_back(linear_json(c, l));
      for (auto ch : h.outs) o.push_back(c.channels[ch]);
      heads.push_back({{"name", h.name},
                       {"query", q},
                       {"key", k},
                       {"value", v},
                       {"out", o},
                       {"similarity", h.sim == Similarity::MinTwo ? "min2" : "identity"}});
    }
    json ffn = json::array();
    for (const auto& s : layer.ffn) {
      json o = json::array();
      for (auto ch : s.outs) o.push_back(c.channels[ch]);
      if (s.kind == FfnStep::Kind::Sum) {
        json ns = json::array();
        for (const auto& n : s.neurons) {
          ns.push_back({{"outer", n.outer.str()},
                        {"act", n.act == Act::Relu ? "relu" : "identity"},
                        {"inner", linear_json(c, n.inner)}});
        }
        ffn.push_back({{"kind", "sum"}, {"out", o}, {"neurons", ns}});
      } else {
        json in = json::array();
        for (const auto& l : s.inputs) in.push_back(linear_json(c, l));
        ffn.push_back({{"kind", "layernorm"}, {"out", o}, {"inputs", in}});
      }
    }
    layers.push_back({{"name", layer.name}, {"heads", heads}, {"ffn", ffn}});
  }
  j["layers"] = layers;
  json ro = json::array();
  for (const auto& [tok, ch] : c.readout) ro.push_back({std::string(codec::spell(tok)), c.channels[ch]});
  j["readout"] = ro;
  return j;
}

inline std::string serialize(const Config& c) { return to_json(c).dump(1) + "\n"; }

inline Linear linear_from_json(const Config& c, const nlohmann::json& j) {
  Linear l;
  for (const auto& t : j.at("terms")) {
    l.terms.push_back({c.channel(t.at(0).get<std::string>()), Weight::parse(t.at(1).get<std::string>())});
  }
  l.bias = Weight::parse(j.at("bias").get<std::string>());
  return l;
}

inline Config from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ptvm-transformer") throw ConfigError("not a transformer config");
  Config c;
  c.version = j.at("version").get<int>();
  if (c.version != 1) throw ConfigError("unsupported config version " + std::to_string(c.version));
  c.channels = j.at("channels").get<std::vector<std::string>>();
  const auto& emb = j.at("embedding");
  c.token_channel.resize(codec::kNumTokens);
  for (std::size_t t = 0; t < codec::kNumTokens; ++t) {
    c.token_channel[t] = c.channel(emb.at("tokens").at(std::string(codec::kSpelling[t])).get<std::string>());
  }
  c.positional_channel = c.channel(emb.at("positional").get<std::string>());
  for (const auto& lj : j.at("layers")) {
    Layer layer;
    layer.name = lj.at("name").get<std::string>();
    for (const auto& hj : lj.at("heads")) {
      Head h;
      h.name = hj.at("name").get<std::string>();
      for (const auto& x : hj.at("query")) h.query.push_back(linear_from_json(c, x));
      for (const auto& x : hj.at("key")) h.key.push_back(linear_from_json(c, x));
      for (const auto& x : hj.at("value")) h.value.push_back(linear_from_json(c, x));
      for (const auto& x : hj.at("out")) h.outs.push_back(c.channel(x.get<std::string>()));
      h.sim = hj.at("similarity").get<std::string>() == "min2" ? Similarity::MinTwo : Similarity::Identity;
      layer.heads.push_back(std::move(h));
    }
    for (const auto& sj : lj.at("ffn")) {
      FfnStep s;
      for (const auto& x : sj.at("out")) s.outs.push_back(c.channel(x.get<std::string>()));
      if (sj.at("kind").get<std::string>() == "sum") {
        s.kind = FfnStep::Kind::Sum;
        for (const auto& nj : sj.at("neurons")) {
          s.neurons.push_back({Weight::parse(nj.at("outer").get<std::string>()),
                               nj.at("act").get<std::string>() == "relu" ? Act::Relu : Act::Identity,
                               linear_from_json(c, nj.at("inner"))});
        }
      } else {
        s.kind = FfnStep::Kind::Norm;
        for (const auto& x : sj.at("inputs")) s.inputs.push_back(linear_from_json(c, x));
      }
      layer.ffn.push_back(std::move(s));
    }
    c.layers.push_back(std::move(layer));
  }
  for (const auto& r : j.at("readout")) {
    c.readout.emplace_back(codec::parse_token(r.at(0).get<std::string>()),
                           c.channel(r.at(1).get<std::string>()));
  }
  c.validate();
  return c;
}

// ---- builder ---------------------------------------------------------------

// Affine expression over named channels, used to write the construction down.
class Lin {
 public:
  Lin() = default;
  Lin(int constant) : bias_(constant, 1) {}  // NOLINT(google-explicit-constructor)
  static Lin of(const std::string& ch) {
    Lin l;
    l.terms_[ch] = {1, 1};
    return l;
  }
  static Lin half(const Lin& x) { return x.times(1, 2); }

  friend Lin operator+(const Lin& a, const Lin& b) {
    Lin out = a;
    for (const auto& [ch, w] : b.terms_) out.add(ch, w.first, w.second);
    out.bias_ = sum(out.bias_, b.bias_);
    return out;
  }
  friend Lin operator-(const Lin& a, const Lin& b) { return a + b.times(-1, 1); }
  Lin operator-() const { return times(-1, 1); }
  friend Lin operator*(int k, const Lin& a) { return a.times(k, 1); }

  [[nodiscard]] Linear compile(const std::map<std::string, std::size_t>& idx) const {
    Linear l;
    for (const auto& [ch, w] : terms_) {
      if (w.first == 0) continue;
      auto it = idx.find(ch);
      if (it == idx.end()) throw ConfigError("unknown channel '" + ch + "'");
      l.terms.push_back({it->second, Weight{w.first, w.second}});
    }
    l.bias = Weight{bias_.first, bias_.second};
    return l;
  }

 private:
  using Frac = std::pair<int, int>;
  std::map<std::string, Frac> terms_;
  Frac bias_{0, 1};

  static Frac reduce(Frac f) {
    int a = f.first < 0 ? -f.first : f.first;
    int b = f.second;
    while (b) {
      const int t = a % b;
      a = b;
      b = t;
    }
    if (a == 0) return {0, 1};
    return {f.first / a, f.second / a};
  }
  static Frac sum(Frac x, Frac y) { return reduce({x.first * y.second + y.first * x.second, x.second * y.second}); }
  void add(const std::string& ch, int n, int d) {
    auto it = terms_.find(ch);
    terms_[ch] = it == terms_.end() ? Frac{n, d} : sum(it->second, {n, d});
  }
  [[nodiscard]] Lin times(int n, int d) const {
    Lin out;
    for (const auto& [ch, w] : terms_) out.terms_[ch] = reduce({w.first * n, w.second * d});
    out.bias_ = reduce({bias_.first * n, bias_.second * d});
    return out;
  }
};

}  // namespace ptvm::tf
