#pragma once

// The three building blocks of the construction, usable on their own with
// either backend. The network in construction.hpp inlines the same formulas
// as FFN neurons and attention heads.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ptvm/numerics/backend.hpp"

namespace ptvm::tf {

// u AND v = ReLU(u + v - 1) for u, v in {0, 1}.
template <class Backend>
typename Backend::Num gadget_and(const Backend& be, const typename Backend::Num& u,
                                 const typename Backend::Num& v) {
  return be.relu(be.sub(be.add(u, v), be.constant(num::Rational(1))));
}

// ReLU(LN(u - v)) + ReLU(LN(v - u)). LN of a scalar is its sign, so this is 0
// when u = v and 1 otherwise: an inequality indicator.
template <class Backend>
typename Backend::Num gadget_equal(const Backend& be, const typename Backend::Num& u,
                                   const typename Backend::Num& v) {
  const auto d = be.layer_norm({be.sub(u, v)});
  const auto e = be.layer_norm({be.sub(v, u)});
  return be.add(be.relu(d[0]), be.relu(e[0]));
}

// Uniform average of the values at every position attaining the maximum score.
template <class Backend>
std::vector<typename Backend::Num> hardmax_attend(const Backend& be,
                                                  const std::vector<typename Backend::Num>& scores,
                                                  const std::vector<std::vector<typename Backend::Num>>& values) {
  if (scores.empty() || scores.size() != values.size()) {
    throw std::invalid_argument("hardmax_attend needs one value per score");
  }
  std::vector<std::size_t> best{0};
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const int c = be.compare(scores[i], scores[best[0]]);
    if (c > 0) {
      best.assign(1, i);
    } else if (c == 0) {
      best.push_back(i);
    }
  }
  std::vector<typename Backend::Num> out;
  for (std::size_t d = 0; d < values[best[0]].size(); ++d) {
    auto s = values[best[0]][d];
    for (std::size_t k = 1; k < best.size(); ++k) s = be.add(s, values[best[k]][d]);
    out.push_back(best.size() == 1 ? s : be.div_count(s, best.size()));
  }
  return out;
}

// Smallest i whose prefix sum v_0 + ... + v_i equals the total. One causal
// head at the last position n-1: query (u_{n-1}, p_{n-1}), key (u_i, 1/(i+1))
// with u_i = LN(s_i, 1). The u-part peaks exactly at matching sums; p_{n-1}
// is smaller than any mismatch loss, so 1/(i+1) only breaks ties, toward the
// earliest position.
template <class Backend>
std::size_t gadget_farthest_retrieval(const Backend& be, const std::vector<int>& v) {
  using Num = typename Backend::Num;
  if (v.empty()) throw std::invalid_argument("farthest retrieval of an empty sequence");
  std::vector<std::vector<Num>> keys;
  std::vector<std::vector<Num>> values;
  std::int64_t s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < -1 || v[i] > 1) throw std::invalid_argument("values must lie in {-1, 0, 1}");
    s += v[i];
    auto u = be.layer_norm({be.constant(num::Rational(s)), be.constant(num::Rational(1))});
    keys.push_back({u[0], u[1], be.constant(num::Rational(1, static_cast<unsigned long>(i + 1)))});
    values.push_back({be.constant(num::Rational(static_cast<long>(i)))});
  }
  const auto& last = keys.back();
  const std::vector<Num> q{last[0], last[1], be.positional(v.size() - 1)};
  std::vector<Num> scores;
  for (const auto& k : keys) {
    Num sc = be.zero();
    for (std::size_t d = 0; d < q.size(); ++d) sc = be.add(sc, be.mul(q[d], k[d]));
    scores.push_back(sc);
  }
  const auto out = hardmax_attend(be, scores, values);
  const num::Surd& r = Backend::exact(out[0]);
  if (!r.is_rational()) throw std::logic_error("farthest retrieval tied across positions");
  const num::Rational q0 = r.rational_value();
  if (q0.get_den() != 1) throw std::logic_error("farthest retrieval tied across positions");
  return q0.get_num().get_ui();
}

}  // namespace ptvm::tf
